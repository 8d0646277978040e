//! CG1 operators on the periodic mesh: mass and stiffness actions and the
//! Helmholtz system (M + alpha^2 S) used to invert 1 - alpha^2 d_xx weakly.
//!
//! On a uniform periodic mesh both matrices are cyclic tridiagonal with
//! constant bands:
//!
//! ```text
//! M[i][i] = 2h/3    M[i][i+-1] = h/6      (row sums h)
//! S[i][i] = 2/h     S[i][i+-1] = -1/h     (row sums 0)
//! ```
//!
//! The Helmholtz matrix is factorized once per (mesh, alpha) and reused for
//! every solve. `alpha = 0` degenerates to a plain mass solve, i.e. the L2
//! projection of the load.

use crate::error::{Error, Result};
use crate::linalg::CyclicTridiag;
use crate::mesh::{Mesh1dPeriodic, NodalField};
use crate::scalar::{cast, Scalar};

/// (M v)_i for the CG1 mass matrix.
pub fn mass_apply<T: Scalar>(mesh: &Mesh1dPeriodic<T>, v: &[T], out: &mut [T]) {
    let n = mesh.n_nodes();
    debug_assert_eq!(v.len(), n);
    debug_assert_eq!(out.len(), n);
    let h6 = mesh.dx() / cast::<T>(6.0);
    let four = cast::<T>(4.0);
    for i in 0..n {
        let prev = v[if i == 0 { n - 1 } else { i - 1 }];
        let next = v[if i + 1 == n { 0 } else { i + 1 }];
        out[i] = h6 * (prev + four * v[i] + next);
    }
}

/// (S v)_i for the CG1 stiffness matrix.
pub fn stiffness_apply<T: Scalar>(mesh: &Mesh1dPeriodic<T>, v: &[T], out: &mut [T]) {
    let n = mesh.n_nodes();
    debug_assert_eq!(v.len(), n);
    debug_assert_eq!(out.len(), n);
    let inv_h = mesh.dx().recip();
    let two = cast::<T>(2.0);
    for i in 0..n {
        let prev = v[if i == 0 { n - 1 } else { i - 1 }];
        let next = v[if i + 1 == n { 0 } else { i + 1 }];
        out[i] = inv_h * (two * v[i] - prev - next);
    }
}

/// Factorized weak Helmholtz operator M + alpha^2 S on a fixed mesh.
#[derive(Debug, Clone)]
pub struct HelmholtzSystem<T> {
    mesh: Mesh1dPeriodic<T>,
    alpha: T,
    solver: CyclicTridiag<T>,
}

impl<T: Scalar> HelmholtzSystem<T> {
    /// Builds and factorizes the system. `alpha >= 0`; zero gives the mass
    /// matrix alone.
    pub fn new(mesh: Mesh1dPeriodic<T>, alpha: T) -> Result<Self> {
        if !(alpha >= T::zero()) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be a finite non-negative real, got {alpha}")));
        }
        let h = mesh.dx();
        let a2 = alpha * alpha;
        let diag = cast::<T>(2.0 / 3.0) * h + cast::<T>(2.0) * a2 / h;
        let off = h / cast::<T>(6.0) - a2 / h;
        let solver = CyclicTridiag::from_constant_bands(mesh.n_nodes(), off, diag, off)?;
        Ok(Self { mesh, alpha, solver })
    }

    /// The factorized mass matrix (alpha = 0).
    pub fn mass(mesh: Mesh1dPeriodic<T>) -> Result<Self> {
        Self::new(mesh, T::zero())
    }

    #[inline]
    pub fn mesh(&self) -> &Mesh1dPeriodic<T> {
        &self.mesh
    }

    #[inline]
    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Applies the assembled matrix: out = (M + alpha^2 S) v.
    pub fn apply(&self, v: &[T], out: &mut [T]) {
        let n = self.mesh.n_nodes();
        debug_assert_eq!(v.len(), n);
        let h = self.mesh.dx();
        let a2 = self.alpha * self.alpha;
        let diag = cast::<T>(2.0 / 3.0) * h + cast::<T>(2.0) * a2 / h;
        let off = h / cast::<T>(6.0) - a2 / h;
        for i in 0..n {
            let prev = v[if i == 0 { n - 1 } else { i - 1 }];
            let next = v[if i + 1 == n { 0 } else { i + 1 }];
            out[i] = diag * v[i] + off * (prev + next);
        }
    }

    /// Solves (M + alpha^2 S) f = load for the nodal values of f.
    pub fn solve(&self, load: &[T]) -> Result<NodalField<T>> {
        let x = self.solver.solve(load)?;
        NodalField::from_values(self.mesh, x)
    }

    /// In-place variant: `load` holds the solution afterwards.
    pub fn solve_in_place(&self, load: &mut [T]) -> Result<()> {
        self.solver.solve_in_place(load)
    }
}
