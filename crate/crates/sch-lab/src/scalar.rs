//! Floating-point abstraction for the numerical kernels.
//!
//! Everything in this crate that does arithmetic is generic over [`Scalar`]
//! so the same code runs in `f32` or `f64`. The crate root exports `f64`
//! aliases for the common types; simulations at the tolerances used by the
//! test suite need `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Scalar type the meshes, fields, solvers and oracles are generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum<Self> + Debug + Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant into `T`, rounding once.
///
/// Panics only if `T` cannot represent the value at all, which no finite
/// constant in this crate triggers for `f32`/`f64`.
#[inline]
pub(crate) fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}
