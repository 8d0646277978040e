//! Uniform periodic 1-d mesh and piecewise-linear (CG1) nodal fields.
//!
//! The domain is the circle [0, L). Node `i` sits at `i * dx` and cell `i`
//! spans [x_i, x_{i+1}) with the last cell wrapping back to node 0; there is
//! no duplicated endpoint node. A CG1 field is stored as one value per node,
//! its derivative is constant on each cell and is exposed as a separate
//! cellwise view.
//!
//! Integrals are taken cell by cell with 3-point Gauss-Legendre quadrature,
//! which is exact for polynomial integrands of degree <= 5 — enough for
//! products of two CG1 fields and a quadratic factor.

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// 3-point Gauss-Legendre rule on the reference cell [0, 1].
///
/// Positions are 1/2 +- sqrt(3/5)/2 and 1/2; weights sum to 1.
pub fn gauss3<T: Scalar>() -> [(T, T); 3] {
    let s: T = cast::<T>(0.6).sqrt(); // sqrt(3/5)
    let half = cast::<T>(0.5);
    [
        (half * (T::one() - s), cast(5.0 / 18.0)),
        (half, cast(8.0 / 18.0)),
        (half * (T::one() + s), cast(5.0 / 18.0)),
    ]
}

/// Reduces `x` into [0, L). `L` must be positive.
#[inline]
pub fn wrap<T: Scalar>(x: T, length: T) -> T {
    let mut r = x % length;
    if r < T::zero() {
        r = r + length;
    }
    // x % L == -0.0 or rounding of r + L can land exactly on L.
    if r >= length {
        r = r - length;
    }
    r
}

/// Shortest signed displacement from `from` to `to` on the circle,
/// mapped into (-L/2, L/2].
#[inline]
pub fn periodic_signed_distance<T: Scalar>(from: T, to: T, length: T) -> T {
    let half = length / cast::<T>(2.0);
    let d = wrap(to - from, length);
    if d > half {
        d - length
    } else {
        d
    }
}

/// Uniform periodic mesh on [0, L) with `n_cells` cells of width `dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh1dPeriodic<T> {
    length: T,
    n_cells: usize,
    dx: T,
}

impl<T: Scalar> Mesh1dPeriodic<T> {
    /// A mesh needs at least 3 cells for the cyclic operators to make sense.
    pub fn new(length: T, n_cells: usize) -> Result<Self> {
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::invalid(format!("mesh length must be positive, got {length}")));
        }
        if n_cells < 3 {
            return Err(Error::invalid(format!("mesh needs at least 3 cells, got {n_cells}")));
        }
        let dx = length / T::from_usize(n_cells).unwrap();
        Ok(Self { length, n_cells, dx })
    }

    #[inline]
    pub fn length(&self) -> T {
        self.length
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of nodes; equals `n_cells` because the endpoint is not duplicated.
    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_cells
    }

    #[inline]
    pub fn dx(&self) -> T {
        self.dx
    }

    /// Coordinate of node `i` (`i < n_nodes`).
    #[inline]
    pub fn node_x(&self, i: usize) -> T {
        T::from_usize(i).unwrap() * self.dx
    }

    /// Centre of cell `i`.
    #[inline]
    pub fn cell_center(&self, i: usize) -> T {
        (T::from_usize(i).unwrap() + cast::<T>(0.5)) * self.dx
    }

    /// Next node index around the circle.
    #[inline]
    pub fn next(&self, i: usize) -> usize {
        if i + 1 == self.n_cells {
            0
        } else {
            i + 1
        }
    }

    /// Previous node index around the circle.
    #[inline]
    pub fn prev(&self, i: usize) -> usize {
        if i == 0 {
            self.n_cells - 1
        } else {
            i - 1
        }
    }

    /// Integrates `density(cell, x)` with the 3-point Gauss rule per cell.
    pub fn integrate_cells<F: FnMut(usize, T) -> T>(&self, mut density: F) -> T {
        let rule = gauss3::<T>();
        let mut total = T::zero();
        for cell in 0..self.n_cells {
            let x0 = self.node_x(cell);
            let mut acc = T::zero();
            for &(t, w) in &rule {
                acc = acc + w * density(cell, x0 + t * self.dx);
            }
            total = total + acc * self.dx;
        }
        total
    }
}

/// Continuous piecewise-linear field: one value per mesh node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField<T> {
    mesh: Mesh1dPeriodic<T>,
    values: Vec<T>,
}

impl<T: Scalar> NodalField<T> {
    pub fn from_values(mesh: Mesh1dPeriodic<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::invalid(format!(
                "field needs {} nodal values, got {}",
                mesh.n_nodes(),
                values.len()
            )));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: Mesh1dPeriodic<T>) -> Self {
        Self { mesh, values: vec![T::zero(); mesh.n_nodes()] }
    }

    /// Nodal interpolant of `f`.
    pub fn project<F: FnMut(T) -> T>(mesh: Mesh1dPeriodic<T>, mut f: F) -> Self {
        let values = (0..mesh.n_nodes()).map(|i| f(mesh.node_x(i))).collect();
        Self { mesh, values }
    }

    #[inline]
    pub fn mesh(&self) -> &Mesh1dPeriodic<T> {
        &self.mesh
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Slope of the field on cell `i` (constant there).
    #[inline]
    pub fn cell_slope(&self, i: usize) -> T {
        (self.values[self.mesh.next(i)] - self.values[i]) / self.mesh.dx
    }

    /// The derivative as a cellwise-constant field.
    pub fn derivative(&self) -> CellwiseField<T> {
        let values = (0..self.mesh.n_cells()).map(|i| self.cell_slope(i)).collect();
        CellwiseField { mesh: self.mesh, values }
    }

    /// Value at local coordinate `t` in [0, 1] within cell `i`.
    #[inline]
    pub fn eval_in_cell(&self, i: usize, t: T) -> T {
        let a = self.values[i];
        let b = self.values[self.mesh.next(i)];
        a + (b - a) * t
    }

    /// Value at an arbitrary point (wrapped into the domain).
    pub fn eval(&self, x: T) -> T {
        let xw = wrap(x, self.mesh.length);
        let mut cell = (xw / self.mesh.dx).to_usize().unwrap_or(0);
        if cell >= self.mesh.n_cells() {
            cell = self.mesh.n_cells() - 1;
        }
        let t = (xw - self.mesh.node_x(cell)) / self.mesh.dx;
        self.eval_in_cell(cell, t)
    }

    /// Rotates nodal values by `k` nodes: result value at node i is the old
    /// value at node i - k, i.e. the field translated right by k*dx.
    pub fn rotate(&self, k: usize) -> Self {
        let n = self.values.len();
        let k = k % n;
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            values.push(self.values[(i + n - k) % n]);
        }
        Self { mesh: self.mesh, values }
    }

    /// Exact integral of the field (piecewise linear, uniform periodic mesh).
    pub fn integrate(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.mesh.dx
    }

    /// Exact L2 norm of the field.
    pub fn l2_norm(&self) -> T {
        let mut acc = T::zero();
        let third: T = cast(1.0 / 3.0);
        for i in 0..self.mesh.n_cells() {
            let a = self.values[i];
            let b = self.values[self.mesh.next(i)];
            acc = acc + (a * a + a * b + b * b) * third;
        }
        (acc * self.mesh.dx).sqrt()
    }

    /// Exact L2 distance between two fields on the same mesh.
    pub fn l2_error(&self, other: &Self) -> Result<T> {
        if self.mesh != other.mesh {
            return Err(Error::invalid("l2_error: fields live on different meshes"));
        }
        let mut acc = T::zero();
        let third: T = cast(1.0 / 3.0);
        for i in 0..self.mesh.n_cells() {
            let a = self.values[i] - other.values[i];
            let j = self.mesh.next(i);
            let b = self.values[j] - other.values[j];
            acc = acc + (a * a + a * b + b * b) * third;
        }
        Ok((acc * self.mesh.dx).sqrt())
    }

    /// Energy 1/2 integral of (u^2 + alpha^2 u_x^2); exact for CG1 fields.
    pub fn h1_energy(&self, alpha: T) -> T {
        let mut mass = T::zero();
        let mut grad = T::zero();
        let third: T = cast(1.0 / 3.0);
        for i in 0..self.mesh.n_cells() {
            let a = self.values[i];
            let b = self.values[self.mesh.next(i)];
            mass = mass + (a * a + a * b + b * b) * third;
            let s = (b - a) / self.mesh.dx;
            grad = grad + s * s;
        }
        cast::<T>(0.5) * (mass + alpha * alpha * grad) * self.mesh.dx
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}

/// Cellwise-constant field, e.g. the derivative of a CG1 field.
#[derive(Debug, Clone, PartialEq)]
pub struct CellwiseField<T> {
    mesh: Mesh1dPeriodic<T>,
    values: Vec<T>,
}

impl<T: Scalar> CellwiseField<T> {
    pub fn from_values(mesh: Mesh1dPeriodic<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.n_cells() {
            return Err(Error::invalid(format!(
                "cellwise field needs {} values, got {}",
                mesh.n_cells(),
                values.len()
            )));
        }
        Ok(Self { mesh, values })
    }

    #[inline]
    pub fn mesh(&self) -> &Mesh1dPeriodic<T> {
        &self.mesh
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn integrate(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.mesh.dx
    }

    /// Minimum value and the (smallest) cell index attaining it.
    pub fn min_with_cell(&self) -> (T, usize) {
        let mut best = self.values[0];
        let mut cell = 0;
        for (i, &v) in self.values.iter().enumerate().skip(1) {
            if v < best {
                best = v;
                cell = i;
            }
        }
        (best, cell)
    }

    /// Maximum value and the (smallest) cell index attaining it.
    pub fn max_with_cell(&self) -> (T, usize) {
        let mut best = self.values[0];
        let mut cell = 0;
        for (i, &v) in self.values.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                cell = i;
            }
        }
        (best, cell)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const L: f64 = 40.0;

    #[test]
    fn mesh_spacing_and_nodes() {
        let mesh = Mesh1dPeriodic::new(L, 20_000).unwrap();
        assert_eq!(mesh.dx(), 0.002);
        assert_eq!(mesh.n_nodes(), 20_000);

        let coarse = Mesh1dPeriodic::new(L, 4).unwrap();
        let xs: Vec<f64> = (0..4).map(|i| coarse.node_x(i)).collect();
        assert_eq!(xs, vec![0.0, 10.0, 20.0, 30.0]);

        let tiny = Mesh1dPeriodic::new(1.0f64, 3).unwrap();
        assert!((tiny.dx() - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn mesh_rejects_bad_input() {
        assert!(Mesh1dPeriodic::new(0.0f64, 10).is_err());
        assert!(Mesh1dPeriodic::new(-1.0f64, 10).is_err());
        assert!(Mesh1dPeriodic::new(40.0f64, 2).is_err());
    }

    #[test]
    fn wrap_reduces_into_domain() {
        assert_eq!(wrap(45.3f64, 40.0), 5.299999999999997);
        assert_eq!(wrap(-5.0f64, 40.0), 35.0);
        assert_eq!(wrap(0.0f64, 40.0), 0.0);
        // A negative value rounding up to exactly L must still land in [0, L).
        let r = wrap(-1e-18f64, 40.0);
        assert!((0.0..40.0).contains(&r));
    }

    #[test]
    fn signed_distance_is_shortest_displacement() {
        assert_eq!(periodic_signed_distance(5.0f64, 7.0, L), 2.0);
        assert_eq!(periodic_signed_distance(7.0f64, 5.0, L), -2.0);
        assert_eq!(periodic_signed_distance(39.0f64, 1.0, L), 2.0);
        // Antipodal points map to +L/2, not -L/2.
        assert_eq!(periodic_signed_distance(0.0f64, 20.0, L), 20.0);
        assert_eq!(periodic_signed_distance(20.0f64, 0.0, L), 20.0);
    }

    #[test]
    fn projection_hits_nodal_values() {
        let mesh = Mesh1dPeriodic::new(L, 8).unwrap();
        let c = NodalField::project(mesh, |_| 2.5f64);
        assert!(c.values().iter().all(|&v| v == 2.5));

        // Steep profile peaks at x = L/4 = 10, which is a node here.
        let mesh = Mesh1dPeriodic::new(L, 20_000).unwrap();
        let w = L / 240.0;
        let steep = NodalField::project(mesh, |x| 0.5 / ((x - 10.0) / w).cosh());
        let peak_node = 5_000; // 10 / 0.002
        assert_eq!(mesh.node_x(peak_node), 10.0);
        assert!((steep.values()[peak_node] - 0.5).abs() < 1e-15);
    }

    /// The shallow profile has min slope -1/4 at x = 10 + w*arccosh(sqrt(2)).
    #[test]
    fn shallow_projection_resolves_min_slope() {
        let w = 1.0; // L / 40
        let mesh = Mesh1dPeriodic::new(L, 40_000).unwrap();
        let u = NodalField::project(mesh, |x: f64| 0.5 / ((x - 10.0) / w).cosh());
        let d = u.derivative();
        let (smin, cell) = d.min_with_cell();
        assert!((smin - (-0.25)).abs() < 1e-5, "min slope {smin}");
        let x_expected = 10.0 + (2.0f64.sqrt()).acosh();
        assert!(
            (mesh.cell_center(cell) - x_expected).abs() < 2.0 * mesh.dx(),
            "min-slope cell centre {} vs {}",
            mesh.cell_center(cell),
            x_expected
        );
    }

    #[test]
    fn integrate_constant_over_domain() {
        let mesh = Mesh1dPeriodic::new(L, 1000).unwrap();
        let one = NodalField::project(mesh, |_| 1.0f64);
        assert!((one.integrate() - 40.0).abs() < 1e-12);
        let q = mesh.integrate_cells(|_, _| 1.0f64);
        assert!((q - 40.0).abs() < 1e-12);
    }

    /// H1 energies of the two reference profiles: 13/24 and 1/3 analytically.
    #[test]
    fn h1_energy_of_reference_profiles() {
        let mesh = Mesh1dPeriodic::new(L, 20_000).unwrap();
        let steep = NodalField::project(mesh, |x: f64| 0.5 / ((x - 10.0) * 6.0).cosh());
        let h1 = steep.h1_energy(1.0);
        assert!((h1 - 13.0 / 24.0).abs() < 1e-3, "steep H1 {h1}");
        assert!((h1 - 0.542).abs() < 1e-3);

        let shallow = NodalField::project(mesh, |x: f64| 0.5 / (x - 10.0).cosh());
        let h1 = shallow.h1_energy(1.0);
        assert!((h1 - 1.0 / 3.0).abs() < 1e-4, "shallow H1 {h1}");
    }

    #[test]
    fn l2_error_basics() {
        let mesh = Mesh1dPeriodic::new(L, 1000).unwrap();
        let a = NodalField::project(mesh, |x: f64| (x * 0.3).sin());
        assert_eq!(a.l2_error(&a).unwrap(), 0.0);

        let one = NodalField::project(mesh, |_| 1.0f64);
        let zero = NodalField::zeros(mesh);
        assert!((one.l2_error(&zero).unwrap() - 40.0f64.sqrt()).abs() < 1e-12);

        // Single hat of height 1: squared integral is 2*dx/3.
        let mut hat = NodalField::zeros(mesh);
        hat.values_mut()[17] = 1.0;
        let expect = (2.0 * mesh.dx() / 3.0).sqrt();
        assert!((hat.l2_error(&zero).unwrap() - expect).abs() < 1e-15);

        let other = Mesh1dPeriodic::new(L, 999).unwrap();
        let b = NodalField::zeros(other);
        assert!(zero.l2_error(&b).is_err());
    }

    #[test]
    fn rotation_translates_by_whole_cells() {
        let mesh = Mesh1dPeriodic::new(L, 100).unwrap();
        let f = |x: f64| (2.0 * std::f64::consts::PI * x / L).sin() + 0.3 * (4.0 * std::f64::consts::PI * x / L).cos();
        let base = NodalField::project(mesh, f);
        let k = 13;
        let shifted = NodalField::project(mesh, |x| f(wrap(x - k as f64 * mesh.dx(), L)));
        let rotated = base.rotate(k);
        for i in 0..100 {
            assert!((shifted.values()[i] - rotated.values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_view_is_cellwise() {
        let mesh = Mesh1dPeriodic::new(L, 4).unwrap();
        let u = NodalField::from_values(mesh, vec![0.0f64, 1.0, 0.0, 0.0]).unwrap();
        let d = u.derivative();
        assert_eq!(d.values().len(), 4);
        assert!((d.values()[0] - 0.1).abs() < 1e-15);
        assert!((d.values()[1] + 0.1).abs() < 1e-15);
        assert_eq!(d.values()[2], 0.0);
        assert_eq!(d.values()[3], 0.0);
    }

    #[test]
    fn generic_over_f32() {
        let mesh = Mesh1dPeriodic::new(40.0f32, 100).unwrap();
        let u = NodalField::project(mesh, |x: f32| (x * 0.1).sin());
        assert!(u.l2_norm() > 0.0);
        assert_eq!(mesh.n_nodes(), 100);
    }
}
