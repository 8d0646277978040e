//! Simulation laboratory for the stochastic Camassa-Holm equation on a
//! periodic domain.
//!
//! The crate provides, in dependency order:
//!
//! - [`mesh`]: uniform periodic mesh, CG1 nodal fields, exact quadrature;
//! - [`linalg`]: direct cyclic tridiagonal solver;
//! - [`fem`]: mass/stiffness operators and the factorized Helmholtz system;
//! - [`noise`]: spatial noise basis (constant / Fourier) and Brownian paths
//!   with block coarsening and on-disk persistence;
//! - [`solver`]: the implicit-midpoint mixed finite element scheme for the
//!   stochastic Camassa-Holm equation in hydrodynamic form;
//! - [`peakon`]: periodic Green's function, closed-form peakon fields, and
//!   exact-solution SDE integrators used as reference oracles;
//! - [`diagnostics`]: wave-breaking and peakon-formation indicators (nu, Pi,
//!   omega), momentum reconstruction, steepening criterion.
//!
//! All numerics are generic over the floating-point type via [`Scalar`];
//! the aliases below fix `f64`, which is what the tolerances in the test
//! suite assume.

pub mod diagnostics;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod noise;
pub mod peakon;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` aliases for the common types.
pub type Mesh = mesh::Mesh1dPeriodic<f64>;
pub type Field = mesh::NodalField<f64>;
pub type Slopes = mesh::CellwiseField<f64>;
pub type Helmholtz = fem::HelmholtzSystem<f64>;
pub type Component = noise::NoiseComponent<f64>;
pub type Basis = noise::NoiseBasis<f64>;
pub type Wiener = noise::BrownianPath<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type Solver = solver::SchSolver<f64>;
pub type Trajectory = solver::Trajectory<f64>;
pub type Kernel = peakon::GreensKernel<f64>;
pub type Peakons = peakon::PeakonState<f64>;
pub type Series = diagnostics::DiagnosticSeries<f64>;
pub type Summary = diagnostics::FormationSummary<f64>;
