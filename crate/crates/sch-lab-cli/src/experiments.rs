//! The experiment runners behind each subcommand.
//!
//! Every runner is a pure function of (config, seed) up to wall-clock
//! metadata: paths are drawn from seeds derived per realization, every
//! resolution of a realization consumes the same increments, and results
//! are assembled in realization order regardless of worker scheduling.

use crate::config::{ExperimentConfig, Ic, UsageError};
use crate::output;
use rayon::prelude::*;
use sch_lab::diagnostics::{fit_gradient, formation_summary, DiagnosticSeries};
use sch_lab::mesh::{periodic_signed_distance, Mesh1dPeriodic, NodalField};
use sch_lab::noise::{derive_seed, BrownianPath, NoiseBasis, NoiseComponent};
use sch_lab::peakon::{l2_error_vs_peakon, milstein_step, nodal_field, GreensKernel, PeakonState};
use sch_lab::solver::{n_steps_for, write_field_csv, SchSolver, SolverConfig};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: flags, config keys, impossible parameter sets.
    Usage(String),
    /// The invocation was fine but the computation or I/O failed.
    Run(String),
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<sch_lab::Error> for CliError {
    fn from(e: sch_lab::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

// --- shared pieces --------------------------------------------------------

/// Initial profiles. The sech profiles are evaluated in periodic distance
/// from the crest at L/4, not in bare x - L/4: the tails then close smoothly
/// at the domain seam. A bare sech leaves a slope kink of size ~sech(3L/4 /
/// width) there, and the momentum reconstruction m = u - a^2 u_xx amplifies
/// any kink by ~1/dx^2, which is enough to break the positivity of m for the
/// wider profile on fine meshes.
pub fn initial_field(cfg: &ExperimentConfig, mesh: Mesh1dPeriodic<f64>, kernel: &GreensKernel<f64>) -> NodalField<f64> {
    let length = cfg.length;
    let crest = length / 4.0;
    match cfg.ic {
        Ic::Steep => {
            let width = length / 240.0;
            NodalField::project(mesh, |x| {
                0.5 / (periodic_signed_distance(crest, x, length).abs() / width).cosh()
            })
        }
        Ic::Shallow => {
            let width = length / 40.0;
            NodalField::project(mesh, |x| {
                0.5 / (periodic_signed_distance(crest, x, length).abs() / width).cosh()
            })
        }
        Ic::Peakon => nodal_field(&initial_peakon(cfg), kernel, mesh),
    }
}

pub fn initial_peakon(cfg: &ExperimentConfig) -> PeakonState<f64> {
    PeakonState::single(1.0, cfg.length / 2.0)
}

/// The noise basis configured by (xi, xi_components). A zero constant
/// amplitude contributes nothing, so it is omitted entirely; with no
/// components at all the run is deterministic and consumes a zero path.
pub fn noise_basis(cfg: &ExperimentConfig) -> Result<NoiseBasis<f64>, CliError> {
    let mut comps = Vec::new();
    if cfg.xi != 0.0 {
        comps.push(NoiseComponent::constant(cfg.xi));
    }
    for spec in &cfg.xi_components {
        comps.push(NoiseComponent::fourier(spec.mode, spec.c, spec.d, spec.xi, cfg.length)?);
    }
    Ok(NoiseBasis::new(comps))
}

fn sample_path(
    basis: &NoiseBasis<f64>,
    seed: u64,
    realization: u64,
    dt: f64,
    steps: usize,
) -> Result<BrownianPath<f64>, CliError> {
    let path = if basis.is_empty() {
        BrownianPath::zeros(dt, steps, 0)?
    } else {
        BrownianPath::sample(derive_seed(seed, realization), dt, steps, basis.len())?
    };
    Ok(path)
}

fn build_solver(
    cfg: &ExperimentConfig,
    cells: usize,
    dt: f64,
    basis: &NoiseBasis<f64>,
) -> Result<(Mesh1dPeriodic<f64>, SchSolver<f64>), CliError> {
    let mesh = Mesh1dPeriodic::new(cfg.length, cells)?;
    let mut solver_cfg = SolverConfig::new(cfg.alpha, dt, cfg.t_end);
    solver_cfg.snapshot_times = cfg.snapshot_times.clone();
    let solver = SchSolver::new(mesh, solver_cfg, basis.clone())?;
    Ok((mesh, solver))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if jobs > 0 {
        builder = builder.num_threads(jobs);
    }
    builder.build().map_err(|e| CliError::Run(e.to_string()))
}

#[derive(Serialize)]
struct Summary<'a, R: Serialize> {
    command: &'static str,
    config: crate::config::ConfigEcho<'a>,
    results: R,
}

fn write_summary<R: Serialize>(
    cfg: &ExperimentConfig,
    command: &'static str,
    results: R,
) -> Result<(), CliError> {
    output::write_json(
        &cfg.output_dir.join("summary.json"),
        &Summary { command, config: cfg.echo(), results },
    )?;
    output::write_metadata(&cfg.output_dir)?;
    Ok(())
}

// --- simulate -------------------------------------------------------------

#[derive(Serialize)]
struct ResolutionReport {
    cells: usize,
    dx: f64,
    path_hash: u64,
    h1_initial: f64,
    h1_final: f64,
    int_u_initial: f64,
    int_u_final: f64,
    min_m_initial: f64,
    /// Deepest cellwise slope over the whole run and when it occurred.
    min_ux: f64,
    min_ux_time: f64,
    /// Initial-profile steepening data: inflection slope, breaking
    /// threshold sqrt(2 H1 / alpha^3), and whether slope < -threshold.
    steepening_s: f64,
    steepening_threshold: f64,
    steepening_satisfied: bool,
}

#[derive(Serialize)]
struct SimulateResults {
    resolutions: Vec<ResolutionReport>,
    pi: Option<f64>,
    omega: Option<f64>,
}

fn run_one_resolution(
    cfg: &ExperimentConfig,
    cells: usize,
    basis: &NoiseBasis<f64>,
    path: &BrownianPath<f64>,
    kernel: &GreensKernel<f64>,
) -> Result<(DiagnosticSeries<f64>, ResolutionReport), CliError> {
    let (mesh, solver) = build_solver(cfg, cells, cfg.dt, basis)?;
    let u0 = initial_field(cfg, mesh, kernel);
    let (s, threshold, satisfied) = sch_lab::diagnostics::steepening_check(&u0, cfg.alpha)
        .map(|(s, th, ok)| (s, th, ok))
        .unwrap_or((f64::NAN, f64::NAN, false));
    let min_m_initial = sch_lab::diagnostics::momentum_density(&u0, cfg.alpha)?
        .values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let traj = solver.run_simulation(&u0, path)?;

    for snap in traj.snapshots() {
        let mut out = BufWriter::new(File::create(output::field_file(&cfg.output_dir, snap.requested, cells))?);
        write_field_csv(&snap.field, &mut out)?;
    }
    let series = DiagnosticSeries::from_trajectory(&traj);
    let mut out = BufWriter::new(File::create(output::diagnostics_file(&cfg.output_dir, cells))?);
    series.write_csv(&mut out)?;

    let records = traj.records();
    let first = &records[0];
    let last = &records[records.len() - 1];
    let deepest = records
        .iter()
        .fold((f64::INFINITY, 0.0f64), |acc, r| if r.min_ux < acc.0 { (r.min_ux, r.t) } else { acc });
    let report = ResolutionReport {
        cells,
        dx: mesh.dx(),
        path_hash: path.increments_hash(),
        h1_initial: first.h1,
        h1_final: last.h1,
        int_u_initial: first.int_u,
        int_u_final: last.int_u,
        min_m_initial,
        min_ux: deepest.0,
        min_ux_time: deepest.1,
        steepening_s: s,
        steepening_threshold: threshold,
        steepening_satisfied: satisfied,
    };
    Ok((series, report))
}

/// Runs every configured resolution once on a shared path (realization 0)
/// and writes fields, diagnostics, and the cross-resolution summary.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let compute_formation = cfg.cells.len() >= 2;
    if compute_formation && cfg.window_t1 > cfg.t_end {
        return usage(format!(
            "averaging window ends at {} but the run stops at {}",
            cfg.window_t1, cfg.t_end
        ));
    }
    output::ensure_dir(&cfg.output_dir)?;
    output::ensure_dir(&cfg.output_dir.join("paths"))?;
    let kernel = GreensKernel::new(cfg.length, cfg.alpha)?;
    let basis = noise_basis(cfg)?;
    let steps = n_steps_for(cfg.t_end, cfg.dt);
    let path = sample_path(&basis, cfg.seed, 0, cfg.dt, steps)?;
    path.write_binary(&output::path_file(&cfg.output_dir, 0))?;

    let pool = thread_pool(cfg.jobs)?;
    let outcomes: Result<Vec<_>, CliError> = pool.install(|| {
        cfg.cells
            .par_iter()
            .map(|&cells| run_one_resolution(cfg, cells, &basis, &path, &kernel))
            .collect()
    });
    let outcomes = outcomes?;

    let (mut pi, mut omega) = (None, None);
    if compute_formation {
        let series: Vec<DiagnosticSeries<f64>> = outcomes.iter().map(|(s, _)| s.clone()).collect();
        let summary = formation_summary(&series, (cfg.window_t0, cfg.window_t1))?;
        pi = Some(summary.pi);
        omega = Some(summary.omega);
    }

    let reports: Vec<ResolutionReport> = outcomes.into_iter().map(|(_, r)| r).collect();
    for r in &reports {
        println!(
            "n={}: H1 {} -> {}, min m(0) = {}, min u_x = {} at t = {}",
            r.cells, r.h1_initial, r.h1_final, r.min_m_initial, r.min_ux, r.min_ux_time
        );
    }
    if let (Some(p), Some(o)) = (pi, omega) {
        println!("Pi = {p}");
        println!("omega = {o}");
    }
    write_summary(cfg, "simulate", SimulateResults { resolutions: reports, pi, omega })
}

// --- convergence sweeps ---------------------------------------------------

#[derive(Serialize)]
struct ConvergenceRow {
    /// dx for the spatial sweep, dt for the temporal one.
    step: f64,
    error: f64,
}

#[derive(Serialize)]
struct ConvergenceResults {
    variable: &'static str,
    table: Vec<ConvergenceRow>,
    fitted_order: f64,
    oracle_p: f64,
    oracle_q: f64,
    path_hash: u64,
}

fn write_convergence_csv(dir: &Path, variable: &str, table: &[ConvergenceRow]) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = BufWriter::new(File::create(dir.join("convergence.csv"))?);
    writeln!(out, "{variable},error")?;
    for row in table {
        writeln!(out, "{},{}", row.step, row.error)?;
    }
    Ok(())
}

/// Advances the peakon oracle through the whole path with the Milstein
/// scheme.
fn oracle_final_state(
    cfg: &ExperimentConfig,
    kernel: &GreensKernel<f64>,
    basis: &NoiseBasis<f64>,
    path: &BrownianPath<f64>,
) -> Result<PeakonState<f64>, CliError> {
    let mut state = initial_peakon(cfg);
    for i in 0..path.n_steps() {
        state = milstein_step(&state, kernel, basis, path.dt(), path.step_increments(i))?;
    }
    Ok(state)
}

/// Spatial convergence: one shared path, FEM at every configured
/// resolution, errors against the Milstein peakon oracle.
pub fn run_converge_dx(cfg: &ExperimentConfig) -> Result<(), CliError> {
    output::ensure_dir(&cfg.output_dir)?;
    output::ensure_dir(&cfg.output_dir.join("paths"))?;
    let kernel = GreensKernel::new(cfg.length, cfg.alpha)?;
    let basis = noise_basis(cfg)?;
    let steps = n_steps_for(cfg.t_end, cfg.dt);
    let path = sample_path(&basis, cfg.seed, 0, cfg.dt, steps)?;
    path.write_binary(&output::path_file(&cfg.output_dir, 0))?;
    let oracle = oracle_final_state(cfg, &kernel, &basis, &path)?;

    let pool = thread_pool(cfg.jobs)?;
    let errors: Result<Vec<_>, CliError> = pool.install(|| {
        cfg.cells
            .par_iter()
            .map(|&cells| {
                let (mesh, solver) = build_solver(cfg, cells, cfg.dt, &basis)?;
                let u0 = nodal_field(&initial_peakon(cfg), &kernel, mesh);
                let traj = solver.run_simulation(&u0, &path)?;
                let err = l2_error_vs_peakon(traj.final_field(), &oracle, &kernel);
                Ok((mesh.dx(), err))
            })
            .collect()
    });
    let errors = errors?;

    let log_dx: Vec<f64> = errors.iter().map(|(dx, _)| dx.ln()).collect();
    let log_err: Vec<f64> = errors.iter().map(|(_, e)| e.ln()).collect();
    let fitted = fit_gradient(&log_dx, &log_err)?;
    let table: Vec<ConvergenceRow> = errors.iter().map(|&(dx, error)| ConvergenceRow { step: dx, error }).collect();
    for row in &table {
        println!("dx = {}: L2 error {}", row.step, row.error);
    }
    println!("fitted order in dx: {fitted}");

    write_convergence_csv(&cfg.output_dir, "dx", &table)?;
    write_summary(
        cfg,
        "converge-dx",
        ConvergenceResults {
            variable: "dx",
            table,
            fitted_order: fitted,
            oracle_p: oracle.p()[0],
            oracle_q: oracle.q()[0],
            path_hash: path.increments_hash(),
        },
    )
}

/// Temporal convergence with coupled paths: one fine path, block-summed to
/// each coarse step, all runs at one resolution against the fine-dt oracle.
pub fn run_converge_dt(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.cells.len() != 1 {
        return usage(format!(
            "converge-dt runs at a single resolution, got {:?}",
            cfg.cells
        ));
    }
    let steps_fine = n_steps_for(cfg.t_end, cfg.dt);
    for &m in &cfg.multipliers {
        if steps_fine % m != 0 {
            return usage(format!(
                "coarse step {} x dt does not divide the {} fine steps to t_end",
                m, steps_fine
            ));
        }
    }
    output::ensure_dir(&cfg.output_dir)?;
    output::ensure_dir(&cfg.output_dir.join("paths"))?;
    let kernel = GreensKernel::new(cfg.length, cfg.alpha)?;
    let basis = noise_basis(cfg)?;
    let path = sample_path(&basis, cfg.seed, 0, cfg.dt, steps_fine)?;
    path.write_binary(&output::path_file(&cfg.output_dir, 0))?;
    let oracle = oracle_final_state(cfg, &kernel, &basis, &path)?;
    let cells = cfg.cells[0];

    let pool = thread_pool(cfg.jobs)?;
    let errors: Result<Vec<_>, CliError> = pool.install(|| {
        cfg.multipliers
            .par_iter()
            .map(|&m| {
                let coarse = path.coarsen(m)?;
                let dt = coarse.dt();
                let (mesh, solver) = build_solver(cfg, cells, dt, &basis)?;
                let u0 = nodal_field(&initial_peakon(cfg), &kernel, mesh);
                let traj = solver.run_simulation(&u0, &coarse)?;
                let err = l2_error_vs_peakon(traj.final_field(), &oracle, &kernel);
                Ok((dt, err))
            })
            .collect()
    });
    let errors = errors?;

    let log_dt: Vec<f64> = errors.iter().map(|(dt, _)| dt.ln()).collect();
    let log_err: Vec<f64> = errors.iter().map(|(_, e)| e.ln()).collect();
    let fitted = fit_gradient(&log_dt, &log_err)?;
    let table: Vec<ConvergenceRow> = errors.iter().map(|&(dt, error)| ConvergenceRow { step: dt, error }).collect();
    for row in &table {
        println!("dt = {}: L2 error {}", row.step, row.error);
    }
    println!("fitted order in dt: {fitted}");

    write_convergence_csv(&cfg.output_dir, "dt", &table)?;
    write_summary(
        cfg,
        "converge-dt",
        ConvergenceResults {
            variable: "dt",
            table,
            fitted_order: fitted,
            oracle_p: oracle.p()[0],
            oracle_q: oracle.q()[0],
            path_hash: path.increments_hash(),
        },
    )
}

// --- ensemble -------------------------------------------------------------

#[derive(Serialize)]
struct RealizationRow {
    realization: usize,
    seed: u64,
    path_hash: u64,
    pi: Option<f64>,
    omega: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct EnsembleResults {
    realizations: Vec<RealizationRow>,
    n_failed: usize,
}

fn run_realization(
    cfg: &ExperimentConfig,
    r: usize,
    basis: &NoiseBasis<f64>,
    kernel: &GreensKernel<f64>,
    steps: usize,
) -> RealizationRow {
    let seed_r = if basis.is_empty() { cfg.seed } else { derive_seed(cfg.seed, r as u64) };
    let attempt = (|| -> Result<(u64, f64, f64), CliError> {
        let path = sample_path(basis, cfg.seed, r as u64, cfg.dt, steps)?;
        path.write_binary(&output::path_file(&cfg.output_dir, r))?;
        let hash = path.increments_hash();
        let mut series = Vec::with_capacity(cfg.cells.len());
        for &cells in &cfg.cells {
            let (mesh, solver) = build_solver(cfg, cells, cfg.dt, basis)?;
            let u0 = initial_field(cfg, mesh, kernel);
            let traj = solver.run_simulation(&u0, &path)?;
            series.push(DiagnosticSeries::from_trajectory(&traj));
        }
        let summary = formation_summary(&series, (cfg.window_t0, cfg.window_t1))?;
        Ok((hash, summary.pi, summary.omega))
    })();
    match attempt {
        Ok((path_hash, pi, omega)) => RealizationRow {
            realization: r,
            seed: seed_r,
            path_hash,
            pi: Some(pi),
            omega: Some(omega),
            error: None,
        },
        Err(e) => {
            let msg = match e {
                CliError::Usage(m) | CliError::Run(m) => m,
            };
            RealizationRow {
                realization: r,
                seed: seed_r,
                path_hash: 0,
                pi: None,
                omega: None,
                error: Some(msg),
            }
        }
    }
}

/// Fans realizations over the worker pool; each realization runs every
/// resolution on its own shared path. Failures are recorded per
/// realization, never fatal to the sweep.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.cells.len() < 2 {
        return usage("ensemble needs at least two resolutions to regress Pi and omega");
    }
    if cfg.window_t1 > cfg.t_end {
        return usage(format!(
            "averaging window ends at {} but the run stops at {}",
            cfg.window_t1, cfg.t_end
        ));
    }
    output::ensure_dir(&cfg.output_dir)?;
    output::ensure_dir(&cfg.output_dir.join("paths"))?;
    let kernel = GreensKernel::new(cfg.length, cfg.alpha)?;
    let basis = noise_basis(cfg)?;
    let steps = n_steps_for(cfg.t_end, cfg.dt);

    let pool = thread_pool(cfg.jobs)?;
    let rows: Vec<RealizationRow> = pool.install(|| {
        (0..cfg.realizations)
            .into_par_iter()
            .map(|r| run_realization(cfg, r, &basis, &kernel, steps))
            .collect()
    });

    let n_failed = rows.iter().filter(|r| r.error.is_some()).count();
    let pis: Vec<f64> = rows.iter().filter_map(|r| r.pi).collect();
    let omegas: Vec<f64> = rows.iter().filter_map(|r| r.omega).collect();
    output::write_histogram_csv(&cfg.output_dir.join("histogram_Pi.csv"), &output::freedman_diaconis(&pis))?;
    output::write_histogram_csv(
        &cfg.output_dir.join("histogram_omega.csv"),
        &output::freedman_diaconis(&omegas),
    )?;

    for row in &rows {
        match (&row.error, row.pi, row.omega) {
            (None, Some(pi), Some(omega)) => {
                println!("realization {}: Pi = {pi}, omega = {omega}", row.realization)
            }
            (Some(msg), _, _) => println!("realization {}: FAILED: {msg}", row.realization),
            _ => {}
        }
    }
    if n_failed > 0 {
        println!("{n_failed} of {} realizations failed", cfg.realizations);
    }
    write_summary(cfg, "ensemble", EnsembleResults { realizations: rows, n_failed })
}

// --- diagnose -------------------------------------------------------------

/// Re-derives Pi and omega from stored diagnostics CSV files, pooling every
/// diagnostics_n<cells>.csv found directly inside the given directories.
pub fn diagnose(dirs: &[PathBuf], window: (f64, f64)) -> Result<(), CliError> {
    let mut by_cells: BTreeMap<usize, (PathBuf, DiagnosticSeries<f64>)> = BTreeMap::new();
    for dir in dirs {
        let listing = std::fs::read_dir(dir)
            .map_err(|e| CliError::Usage(format!("cannot read directory {}: {e}", dir.display())))?;
        let mut names: Vec<PathBuf> = Vec::new();
        for entry in listing {
            let entry = entry.map_err(|e| CliError::Run(e.to_string()))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if name.starts_with("diagnostics_n") && name.ends_with(".csv") {
                names.push(entry.path());
            }
        }
        names.sort();
        for path in names {
            let file = File::open(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let series = DiagnosticSeries::read_csv(BufReader::new(file))
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            if let Some((prev, _)) = by_cells.get(&series.cells()) {
                return usage(format!(
                    "duplicate resolution n={}: {} and {}",
                    series.cells(),
                    prev.display(),
                    path.display()
                ));
            }
            by_cells.insert(series.cells(), (path, series));
        }
    }
    if by_cells.len() < 2 {
        return usage(format!(
            "need diagnostics from at least two resolutions, found {}",
            by_cells.len()
        ));
    }
    let series: Vec<DiagnosticSeries<f64>> = by_cells.values().map(|(_, s)| s.clone()).collect();
    let summary = formation_summary(&series, window).map_err(|e| CliError::Usage(e.to_string()))?;
    let resolutions: Vec<usize> = by_cells.keys().copied().collect();
    println!("pooled resolutions: {resolutions:?}");
    println!("Pi = {}", summary.pi);
    println!("omega = {}", summary.omega);
    Ok(())
}
