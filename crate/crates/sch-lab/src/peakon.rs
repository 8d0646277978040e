//! Exact-solution machinery on the periodic domain: the Green's function of
//! 1 - alpha^2 d_xx, closed-form peakon velocity fields, and the stochastic
//! ODEs for peakon parameters (p_k, q_k) in both Stratonovich and Ito form.
//!
//! These are the reference oracles the finite element solver is measured
//! against: a single peakon driven through the parameter ODEs is an exact
//! solution of the stochastic Camassa-Holm equation, so the PDE error is
//! just the distance to the reconstructed field.
//!
//! Conventions used throughout: positions reduce mod L into [0, L);
//! `sign(0) = 0`, so a peakon never feels its own kink.

use crate::error::{Error, Result};
use crate::mesh::{gauss3, wrap, Mesh1dPeriodic, NodalField};
use crate::noise::NoiseBasis;
use crate::scalar::{cast, Scalar};
use std::io::Write;

// --- adaptive quadrature ---------------------------------------------------

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
///
/// Plain recursive bisection with the standard 1/15 Richardson correction;
/// the integrands here are smooth on each invocation interval (callers split
/// at kinks first), so this converges quickly.
pub(crate) fn adaptive_simpson<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T) -> T {
    if a == b {
        return T::zero();
    }
    let two = cast::<T>(2.0);
    let six = cast::<T>(6.0);
    let four = cast::<T>(4.0);
    let m = (a + b) / two;
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / six * (fa + four * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T, fa: T, fm: T, fb: T, whole: T, tol: T, depth: u32) -> T {
    let two = cast::<T>(2.0);
    let six = cast::<T>(6.0);
    let four = cast::<T>(4.0);
    let fifteen = cast::<T>(15.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / six * (fa + four * flm + fm);
    let right = (b - m) / six * (fm + four * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= fifteen * tol {
        left + right + delta / fifteen
    } else {
        let half_tol = tol / two;
        simpson_rec(f, a, m, fa, flm, fm, left, half_tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, half_tol, depth - 1)
    }
}

// --- Green's function -------------------------------------------------------

/// Periodic Green's function K of the Helmholtz operator 1 - alpha^2 d_xx:
///
/// ```text
/// K(x) = [ exp(-m/alpha) + exp(-L/alpha) exp(m/alpha) ] / ( 2 (1 - exp(-L/alpha)) )
/// ```
///
/// with m = x mod L in [0, L). K is L-periodic, symmetric about L/2, has a
/// kink at 0 and integrates to 1 over a period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreensKernel<T> {
    length: T,
    alpha: T,
    em_l: T,      // exp(-L/alpha)
    inv_denom: T, // 1 / (2 (1 - exp(-L/alpha)))
}

impl<T: Scalar> GreensKernel<T> {
    pub fn new(length: T, alpha: T) -> Result<Self> {
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::invalid(format!("kernel needs a positive domain length, got {length}")));
        }
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::invalid(format!("kernel needs alpha > 0, got {alpha}")));
        }
        let em_l = (-length / alpha).exp();
        let inv_denom = (cast::<T>(2.0) * (T::one() - em_l)).recip();
        Ok(Self { length, alpha, em_l, inv_denom })
    }

    #[inline]
    pub fn length(&self) -> T {
        self.length
    }

    #[inline]
    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// exp(-L/alpha), the periodic wrap weight.
    #[inline]
    pub fn em_l(&self) -> T {
        self.em_l
    }

    /// K(x).
    #[inline]
    pub fn eval(&self, x: T) -> T {
        let m = wrap(x, self.length);
        ((-m / self.alpha).exp() + self.em_l * (m / self.alpha).exp()) * self.inv_denom
    }

    /// K'(x) away from the kink; at x = 0 (mod L) the symmetric mean of the
    /// one-sided limits, which is 0.
    #[inline]
    pub fn eval_deriv(&self, x: T) -> T {
        let m = wrap(x, self.length);
        if m == T::zero() {
            return T::zero();
        }
        (-(-m / self.alpha).exp() + self.em_l * (m / self.alpha).exp()) * self.inv_denom / self.alpha
    }

    /// K(0) = (1 + exp(-L/alpha)) / (2 (1 - exp(-L/alpha))); the speed of a
    /// unit peakon.
    #[inline]
    pub fn k0(&self) -> T {
        (T::one() + self.em_l) * self.inv_denom
    }
}

// --- peakon state and fields -------------------------------------------------

/// Momenta and positions of a peakon ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakonState<T> {
    p: Vec<T>,
    q: Vec<T>,
}

impl<T: Scalar> PeakonState<T> {
    pub fn new(p: Vec<T>, q: Vec<T>) -> Result<Self> {
        if p.is_empty() || p.len() != q.len() {
            return Err(Error::invalid(format!(
                "peakon state needs equally many momenta and positions (>= 1), got {} and {}",
                p.len(),
                q.len()
            )));
        }
        if p.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("peakon state entries must be finite"));
        }
        Ok(Self { p, q })
    }

    pub fn single(p: T, q: T) -> Self {
        Self { p: vec![p], q: vec![q] }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.p.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn p(&self) -> &[T] {
        &self.p
    }

    #[inline]
    pub fn q(&self) -> &[T] {
        &self.q
    }

    /// Reduces every position into [0, L).
    pub fn wrap_positions(&mut self, length: T) {
        for q in &mut self.q {
            *q = wrap(*q, length);
        }
    }
}

/// Velocity field u(x) = sum_k p_k K(x - q_k).
pub fn velocity<T: Scalar>(state: &PeakonState<T>, kernel: &GreensKernel<T>, x: T) -> T {
    state
        .p
        .iter()
        .zip(&state.q)
        .map(|(&p, &q)| p * kernel.eval(x - q))
        .sum()
}

/// Slope of the velocity field; at a kink the symmetric mean (sign(0) = 0).
pub fn velocity_slope<T: Scalar>(state: &PeakonState<T>, kernel: &GreensKernel<T>, x: T) -> T {
    state
        .p
        .iter()
        .zip(&state.q)
        .map(|(&p, &q)| p * kernel.eval_deriv(x - q))
        .sum()
}

/// Nodal interpolant of the peakon velocity field.
pub fn nodal_field<T: Scalar>(
    state: &PeakonState<T>,
    kernel: &GreensKernel<T>,
    mesh: Mesh1dPeriodic<T>,
) -> NodalField<T> {
    NodalField::project(mesh, |x| velocity(state, kernel, x))
}

/// L2 distance between a CG1 field and the exact peakon velocity field.
///
/// Quadrature is 3-point Gauss per cell, with cells containing a peakon
/// position split at the kink first so every panel sees a smooth integrand.
pub fn l2_error_vs_peakon<T: Scalar>(
    field: &NodalField<T>,
    state: &PeakonState<T>,
    kernel: &GreensKernel<T>,
) -> T {
    let mesh = *field.mesh();
    let rule = gauss3::<T>();
    let mut kinks: Vec<T> = state.q.iter().map(|&q| wrap(q, kernel.length())).collect();
    kinks.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut acc = T::zero();
    for cell in 0..mesh.n_cells() {
        let x0 = mesh.node_x(cell);
        let x1 = x0 + mesh.dx();
        // Panels: the cell, split at any kinks strictly inside it.
        let mut bounds = vec![x0];
        for &k in &kinks {
            if k > x0 && k < x1 {
                bounds.push(k);
            }
        }
        bounds.push(x1);
        for w in bounds.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = b - a;
            if len <= T::zero() {
                continue;
            }
            let mut panel = T::zero();
            for &(t, wgt) in &rule {
                let x = a + t * len;
                let tt = (x - x0) / mesh.dx();
                let diff = field.eval_in_cell(cell, tt) - velocity(state, kernel, x);
                panel = panel + wgt * diff * diff;
            }
            acc = acc + panel * len;
        }
    }
    acc.sqrt()
}

// --- parameter SDEs -----------------------------------------------------------

/// Stratonovich drift and diffusion of the peakon parameter SDEs.
///
/// Layout: `drift_*[k]` per peakon; `diff_*[k * n_components + j]` for
/// peakon k and noise component j.
#[derive(Debug, Clone, PartialEq)]
pub struct StratRhs<T> {
    pub drift_p: Vec<T>,
    pub drift_q: Vec<T>,
    pub diff_p: Vec<T>,
    pub diff_q: Vec<T>,
    pub n_components: usize,
}

/// Evaluates the Stratonovich right-hand side
///
/// ```text
/// dp_k = -p_k / (2 alpha (1 - E)) sum_l p_l sign(q_k - q_l)
///           [ exp(-m_kl/alpha) - E exp(m_kl/alpha) ] dt  -  p_k sum_j Xi^j_x(q_k) o dW^j
/// dq_k =  1 / (2 (1 - E)) sum_l p_l [ exp(-m_kl/alpha) + E exp(m_kl/alpha) ] dt
///           + sum_j Xi^j(q_k) o dW^j
/// ```
///
/// with E = exp(-L/alpha), m_kl = (q_k - q_l) mod L and sign(0) = 0. The
/// sign factor acts on the difference of the stored representatives, so
/// positions are expected reduced into [0, L) (the integrators maintain
/// this).
pub fn strat_rhs<T: Scalar>(
    state: &PeakonState<T>,
    kernel: &GreensKernel<T>,
    basis: &NoiseBasis<T>,
) -> StratRhs<T> {
    let n = state.len();
    let m = basis.len();
    let alpha = kernel.alpha();
    let e = kernel.em_l();
    let inv_2e = (cast::<T>(2.0) * (T::one() - e)).recip();

    let mut drift_p = vec![T::zero(); n];
    let mut drift_q = vec![T::zero(); n];
    for k in 0..n {
        let qk = state.q[k];
        let mut sp = T::zero();
        let mut sq = T::zero();
        for l in 0..n {
            let diff = qk - state.q[l];
            let mkl = wrap(diff, kernel.length());
            let down = (-mkl / alpha).exp();
            let up = e * (mkl / alpha).exp();
            sq = sq + state.p[l] * (down + up);
            let sign = if diff > T::zero() {
                T::one()
            } else if diff < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            sp = sp + state.p[l] * sign * (down - up);
        }
        drift_p[k] = -state.p[k] * inv_2e / alpha * sp;
        drift_q[k] = inv_2e * sq;
    }

    let mut diff_p = vec![T::zero(); n * m];
    let mut diff_q = vec![T::zero(); n * m];
    for k in 0..n {
        for (j, comp) in basis.iter().enumerate() {
            diff_p[k * m + j] = -state.p[k] * comp.xi_x(state.q[k]);
            diff_q[k * m + j] = comp.xi(state.q[k]);
        }
    }

    StratRhs { drift_p, drift_q, diff_p, diff_q, n_components: m }
}

/// Ito drift and diffusion for a single peakon.
#[derive(Debug, Clone, PartialEq)]
pub struct ItoRhs<T> {
    pub drift_p: T,
    pub drift_q: T,
    pub diff_p: Vec<T>,
    pub diff_q: Vec<T>,
}

/// Evaluates the Ito right-hand side for a single peakon:
///
/// ```text
/// dp = p/2 sum_j [ (Xi^j_x)^2 - Xi^j Xi^j_xx ](q) dt - p sum_j Xi^j_x(q) dW^j
/// dq = 1/2 [ p (1 + E) / (1 - E) + sum_j (Xi^j Xi^j_x)(q) ] dt + sum_j Xi^j(q) dW^j
/// ```
///
/// This is exactly the Stratonovich system above converted to Ito calculus;
/// only the single-peakon case is supported.
pub fn ito_rhs<T: Scalar>(
    state: &PeakonState<T>,
    kernel: &GreensKernel<T>,
    basis: &NoiseBasis<T>,
) -> Result<ItoRhs<T>> {
    if state.len() != 1 {
        return Err(Error::Unsupported(format!(
            "Ito form is implemented for a single peakon, got {}",
            state.len()
        )));
    }
    let p = state.p[0];
    let q = state.q[0];
    let e = kernel.em_l();
    let half = cast::<T>(0.5);

    let mut drift_p = T::zero();
    let mut noise_drift_q = T::zero();
    let mut diff_p = Vec::with_capacity(basis.len());
    let mut diff_q = Vec::with_capacity(basis.len());
    for comp in basis.iter() {
        let xi = comp.xi(q);
        let xi_x = comp.xi_x(q);
        let xi_xx = comp.xi_xx(q);
        drift_p = drift_p + half * p * (xi_x * xi_x - xi * xi_xx);
        noise_drift_q = noise_drift_q + half * xi * xi_x;
        diff_p.push(-p * xi_x);
        diff_q.push(xi);
    }
    let drift_q = half * p * (T::one() + e) / (T::one() - e) + noise_drift_q;
    Ok(ItoRhs { drift_p, drift_q, diff_p, diff_q })
}

/// One Milstein step of the single-peakon Ito system.
///
/// The diagonal double integrals are exact, (dW_j^2 - dt)/2; mixed ones use
/// the symmetric approximation dW_j dW_l / 2, which is exact whenever only
/// one component is active (the configurations exercised here).
pub fn milstein_step<T: Scalar>(
    state: &PeakonState<T>,
    kernel: &GreensKernel<T>,
    basis: &NoiseBasis<T>,
    dt: T,
    dw: &[T],
) -> Result<PeakonState<T>> {
    if dw.len() != basis.len() {
        return Err(Error::invalid(format!(
            "got {} increments for {} noise components",
            dw.len(),
            basis.len()
        )));
    }
    let rhs = ito_rhs(state, kernel, basis)?;
    let p = state.p[0];
    let q = state.q[0];
    let half = cast::<T>(0.5);

    let mut p_new = p + rhs.drift_p * dt;
    let mut q_new = q + rhs.drift_q * dt;
    for j in 0..basis.len() {
        p_new = p_new + rhs.diff_p[j] * dw[j];
        q_new = q_new + rhs.diff_q[j] * dw[j];
    }
    // Milstein corrections: (L^j b_l) with L^j = sum_k b_j^k d/dx_k gives
    //   p-component: p (Xi^j_x Xi^l_x - Xi^j Xi^l_xx),  q-component: Xi^j Xi^l_x.
    let comps = basis.components();
    for (j, cj) in comps.iter().enumerate() {
        for (l, cl) in comps.iter().enumerate() {
            let area = if j == l {
                half * (dw[j] * dw[j] - dt)
            } else {
                half * dw[j] * dw[l]
            };
            let xi_j = cj.xi(q);
            let xij_x = cj.xi_x(q);
            let xil_x = cl.xi_x(q);
            let xil_xx = cl.xi_xx(q);
            p_new = p_new + p * (xij_x * xil_x - xi_j * xil_xx) * area;
            q_new = q_new + xi_j * xil_x * area;
        }
    }

    let mut out = PeakonState::new(vec![p_new], vec![q_new])?;
    out.wrap_positions(kernel.length());
    Ok(out)
}

/// One implicit-midpoint step of the Stratonovich system (any number of
/// peakons), matching the time discretisation of the PDE solver. The
/// midpoint equations are solved by fixed-point iteration.
pub fn strat_midpoint_step<T: Scalar>(
    state: &PeakonState<T>,
    kernel: &GreensKernel<T>,
    basis: &NoiseBasis<T>,
    dt: T,
    dw: &[T],
) -> Result<PeakonState<T>> {
    if dw.len() != basis.len() {
        return Err(Error::invalid(format!(
            "got {} increments for {} noise components",
            dw.len(),
            basis.len()
        )));
    }
    let n = state.len();
    let m = basis.len();
    let half = cast::<T>(0.5);
    let scale = state.p.iter().chain(state.q.iter()).fold(T::one(), |acc, &v| acc.max(v.abs()));
    let tol = cast::<T>(1e-13) * scale;

    let mut p_next = state.p.clone();
    let mut q_next = state.q.clone();
    for iter in 0..200 {
        let mid = PeakonState::new(
            state.p.iter().zip(&p_next).map(|(&a, &b)| half * (a + b)).collect(),
            state.q.iter().zip(&q_next).map(|(&a, &b)| half * (a + b)).collect(),
        )?;
        let rhs = strat_rhs(&mid, kernel, basis);
        let mut delta = T::zero();
        for k in 0..n {
            let mut p_new = state.p[k] + rhs.drift_p[k] * dt;
            let mut q_new = state.q[k] + rhs.drift_q[k] * dt;
            for j in 0..m {
                p_new = p_new + rhs.diff_p[k * m + j] * dw[j];
                q_new = q_new + rhs.diff_q[k * m + j] * dw[j];
            }
            delta = delta.max((p_new - p_next[k]).abs()).max((q_new - q_next[k]).abs());
            p_next[k] = p_new;
            q_next[k] = q_new;
        }
        if delta <= tol {
            let mut out = PeakonState::new(p_next, q_next)?;
            out.wrap_positions(kernel.length());
            return Ok(out);
        }
        let _ = iter;
    }
    Err(Error::NoConvergence {
        step: 0,
        time: 0.0,
        residual: tol.to_f64().unwrap_or(f64::NAN),
        iters: 200,
    })
}

// --- convolution identity ------------------------------------------------------

/// Residual of the closed-form identity for the noise convolution term of a
/// single peakon u(x) = p K(x - q): for x away from the kink,
///
/// ```text
/// K * ( 2 u Xi_y + alpha^2 u_y Xi_yy )(x)
///     = u(x) Xi_x(q) + u_x(x) Xi(q) - u_x(x) Xi(x) .
/// ```
///
/// The left side is evaluated by adaptive quadrature (absolute tolerance
/// 1e-10), splitting the integration range at the kinks of K(x - y) and
/// u(y); the right side comes from the closed forms. Returns |lhs - rhs|
/// for each sample point.
pub fn convolution_residual<T: Scalar>(
    state: &PeakonState<T>,
    component: &crate::noise::NoiseComponent<T>,
    kernel: &GreensKernel<T>,
    xs: &[T],
) -> Result<Vec<T>> {
    if state.len() != 1 {
        return Err(Error::Unsupported("convolution identity check expects a single peakon".into()));
    }
    let p = state.p[0];
    let q = wrap(state.q[0], kernel.length());
    let l = kernel.length();
    let alpha = kernel.alpha();
    let a2 = alpha * alpha;
    let tol = cast::<T>(1e-10);

    let mut out = Vec::with_capacity(xs.len());
    for &x_raw in xs {
        let x = wrap(x_raw, l);
        if x == q {
            return Err(Error::invalid("sample point coincides with the peakon position"));
        }
        // Integrand of the convolution; smooth except at y = q and y = x.
        let f = |y: T| {
            let u = p * kernel.eval(y - q);
            let u_y = p * kernel.eval_deriv(y - q);
            let xi_y = component.xi_x(y);
            let xi_yy = component.xi_xx(y);
            kernel.eval(x - y) * (cast::<T>(2.0) * u * xi_y + a2 * u_y * xi_yy)
        };
        let mut cuts = vec![T::zero(), l];
        for s in [x, q] {
            if s > T::zero() && s < l {
                cuts.push(s);
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let piece_tol = tol / T::from_usize(4 * (cuts.len() - 1)).unwrap();
        let mut lhs = T::zero();
        for w in cuts.windows(2) {
            lhs = lhs + adaptive_simpson(&f, w[0], w[1], piece_tol);
        }

        let u_x = p * kernel.eval(x - q);
        let ux_x = p * kernel.eval_deriv(x - q);
        let rhs = u_x * component.xi_x(q) + ux_x * component.xi(q) - ux_x * component.xi(x);
        out.push((lhs - rhs).abs());
    }
    Ok(out)
}

// --- trajectory output -----------------------------------------------------

/// One sample of a single-peakon parameter trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakonSample<T> {
    pub t: T,
    pub p: T,
    pub q: T,
}

impl<T: Scalar> PeakonSample<T> {
    pub fn new(t: T, state: &PeakonState<T>) -> Result<Self> {
        if state.len() != 1 {
            return Err(Error::Unsupported("trajectory samples expect a single peakon".into()));
        }
        Ok(Self { t, p: state.p[0], q: state.q[0] })
    }
}

/// Writes a parameter trajectory as `t,p,q` CSV.
pub fn write_peakon_csv<T: Scalar, W: Write>(samples: &[PeakonSample<T>], out: &mut W) -> Result<()> {
    writeln!(out, "t,p,q")?;
    for s in samples {
        writeln!(out, "{},{},{}", s.t, s.p, s.q)?;
    }
    Ok(())
}
