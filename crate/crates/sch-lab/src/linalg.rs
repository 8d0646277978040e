//! Direct solver for cyclic tridiagonal systems.
//!
//! A periodic CG1 operator has a tridiagonal core plus two corner entries
//! coupling the first and last unknowns. The corners are removed with a
//! rank-one update (Sherman-Morrison): write A = A' + u v^T where
//!
//! ```text
//! u = (gamma, 0, ..., 0, bl)^T      v = (1, 0, ..., 0, tr/gamma)^T
//! ```
//!
//! with `tr = A[0][n-1]`, `bl = A[n-1][0]` and `gamma = -diag[0]` for
//! conditioning. A' is tridiagonal with `diag[0]` and `diag[n-1]` adjusted,
//! so a single Thomas factorization of A' serves every solve:
//!
//! ```text
//! x = y - (v.y / (1 + v.z)) z,   y = A'^{-1} r,   z = A'^{-1} u .
//! ```
//!
//! The factorization (and z) is computed once at construction; each solve is
//! two O(n) substitution sweeps. No pivoting: the mass and Helmholtz
//! matrices this crate feeds in are strictly diagonally dominant, and the
//! stepper's update matrix only adds a skew-dominant advection band whose
//! off-diagonal product is negative, which pushes the Thomas pivots up
//! rather than toward zero. A zero pivot is still reported as an error.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct CyclicTridiag<T> {
    n: usize,
    sub: Vec<T>,     // sub[i] = A[i][i-1], sub[0] unused
    gam: Vec<T>,     // Thomas multipliers, gam[0] unused
    inv_bet: Vec<T>, // reciprocal pivots of A'
    z: Vec<T>,       // A'^{-1} u
    tr_over_gamma: T,
    denom: T, // 1 + v.z
}

impl<T: Scalar> CyclicTridiag<T> {
    /// Factorizes the cyclic tridiagonal matrix given by its bands.
    ///
    /// `sub[i]` couples row i to column i-1 (entry 0 ignored), `sup[i]`
    /// couples row i to column i+1 (last entry ignored), `tr`/`bl` are the
    /// top-right and bottom-left corners. Needs n >= 3 so the corners do not
    /// overlap the tridiagonal band.
    pub fn new(sub: Vec<T>, diag: Vec<T>, sup: Vec<T>, tr: T, bl: T) -> Result<Self> {
        let n = diag.len();
        if n < 3 {
            return Err(Error::invalid(format!("cyclic tridiagonal system needs n >= 3, got {n}")));
        }
        if sub.len() != n || sup.len() != n {
            return Err(Error::invalid("band arrays must all have length n"));
        }
        let gamma = -diag[0];
        if gamma == T::zero() {
            return Err(Error::invalid("zero leading diagonal entry"));
        }

        // Modified tridiagonal core A'.
        let mut d = diag.clone();
        d[0] = d[0] - gamma;
        d[n - 1] = d[n - 1] - bl * tr / gamma;

        // Thomas factorization of A'.
        let mut gam = vec![T::zero(); n];
        let mut inv_bet = vec![T::zero(); n];
        let mut bet = d[0];
        if bet == T::zero() {
            return Err(Error::invalid("zero pivot in tridiagonal factorization"));
        }
        inv_bet[0] = bet.recip();
        for i in 1..n {
            gam[i] = sup[i - 1] * inv_bet[i - 1];
            bet = d[i] - sub[i] * gam[i];
            if bet == T::zero() || !bet.is_finite() {
                return Err(Error::invalid(format!("zero pivot at row {i} in tridiagonal factorization")));
            }
            inv_bet[i] = bet.recip();
        }

        let mut solver = Self {
            n,
            sub,
            gam,
            inv_bet,
            z: Vec::new(),
            tr_over_gamma: tr / gamma,
            denom: T::zero(),
        };

        let mut u = vec![T::zero(); n];
        u[0] = gamma;
        u[n - 1] = bl;
        let z = solver.solve_core(&u);
        solver.denom = T::one() + z[0] + solver.tr_over_gamma * z[n - 1];
        if solver.denom == T::zero() || !solver.denom.is_finite() {
            return Err(Error::invalid("singular cyclic correction"));
        }
        solver.z = z;
        Ok(solver)
    }

    /// Convenience constructor for constant bands (uniform meshes).
    pub fn from_constant_bands(n: usize, sub: T, diag: T, sup: T) -> Result<Self> {
        Self::new(vec![sub; n], vec![diag; n], vec![sup; n], sup, sub)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Thomas substitution with the stored factorization of A'.
    fn solve_core(&self, rhs: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = vec![T::zero(); n];
        x[0] = rhs[0] * self.inv_bet[0];
        for i in 1..n {
            x[i] = (rhs[i] - self.sub[i] * x[i - 1]) * self.inv_bet[i];
        }
        for i in (0..n - 1).rev() {
            let correction = self.gam[i + 1] * x[i + 1];
            x[i] = x[i] - correction;
        }
        x
    }

    /// Solves A x = rhs.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        if rhs.len() != self.n {
            return Err(Error::invalid(format!("rhs length {} does not match system size {}", rhs.len(), self.n)));
        }
        let mut x = self.solve_core(rhs);
        let factor = (x[0] + self.tr_over_gamma * x[self.n - 1]) / self.denom;
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi = *xi - factor * *zi;
        }
        Ok(x)
    }

    /// Solves in place, reusing `x` as both input (rhs) and output.
    pub fn solve_in_place(&self, x: &mut [T]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::invalid(format!("rhs length {} does not match system size {}", x.len(), self.n)));
        }
        let n = self.n;
        x[0] = x[0] * self.inv_bet[0];
        for i in 1..n {
            x[i] = (x[i] - self.sub[i] * x[i - 1]) * self.inv_bet[i];
        }
        for i in (0..n - 1).rev() {
            let correction = self.gam[i + 1] * x[i + 1];
            x[i] = x[i] - correction;
        }
        let factor = (x[0] + self.tr_over_gamma * x[n - 1]) / self.denom;
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi = *xi - factor * *zi;
        }
        Ok(())
    }
}
