//! Experiment configuration: presets, the flat `key = value` config file
//! format, and command-line overrides.
//!
//! Precedence, lowest to highest: preset defaults, `--desk` rescaling,
//! config file entries, explicit flags. The preset itself is chosen by
//! `--preset`, falling back to the config file's `preset` key and then to
//! the subcommand's natural preset.

use serde::Serialize;
use std::fmt;
use std::path::PathBuf;

/// A usage-class error: bad flags, bad config keys, impossible
/// combinations. Mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    ConvergeDx,
    ConvergeDt,
    DeterministicSteep,
    DeterministicShallow,
    Ensemble,
}

impl Preset {
    fn parse(s: &str) -> Result<Self, UsageError> {
        match s {
            "converge-dx" => Ok(Self::ConvergeDx),
            "converge-dt" => Ok(Self::ConvergeDt),
            "deterministic-steep" => Ok(Self::DeterministicSteep),
            "deterministic-shallow" => Ok(Self::DeterministicShallow),
            "ensemble" => Ok(Self::Ensemble),
            other => usage(format!("unknown preset '{other}'")),
        }
    }
}

/// Initial profile. Not a config-file key; chosen by the preset and
/// overridable with `--ic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ic {
    Steep,
    Shallow,
    Peakon,
}

/// One Fourier noise component, config syntax `j:C:D:xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourierSpec {
    pub mode: u32,
    pub c: f64,
    pub d: f64,
    pub xi: f64,
}

impl FourierSpec {
    fn parse(s: &str) -> Result<Self, UsageError> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return usage(format!("xi_components entry '{s}' is not of the form j:C:D:xi"));
        }
        let mode = parts[0]
            .trim()
            .parse::<u32>()
            .map_err(|e| UsageError(format!("bad mode in '{s}': {e}")))?;
        let nums: Result<Vec<f64>, _> = parts[1..].iter().map(|p| p.trim().parse::<f64>()).collect();
        let nums = nums.map_err(|e| UsageError(format!("bad number in '{s}': {e}")))?;
        Ok(Self { mode, c: nums[0], d: nums[1], xi: nums[2] })
    }
}

/// Fully resolved experiment parameters.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub length: f64,
    pub alpha: f64,
    pub cells: Vec<usize>,
    pub dt: f64,
    pub t_end: f64,
    pub xi: f64,
    pub xi_components: Vec<FourierSpec>,
    pub realizations: usize,
    pub seed: u64,
    pub snapshot_times: Vec<f64>,
    pub window_t0: f64,
    pub window_t1: f64,
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub ic: Ic,
    /// Coarse time steps for converge-dt, as multiples of the fine dt.
    pub multipliers: Vec<usize>,
}

/// The reproducibility-relevant subset echoed into summary.json. The
/// output directory and worker count are deliberately absent: payload
/// bytes must not depend on where results land or how many threads
/// produced them.
#[derive(Serialize)]
pub struct ConfigEcho<'a> {
    preset: Preset,
    #[serde(rename = "L")]
    length: f64,
    alpha: f64,
    cells: &'a [usize],
    dt: f64,
    t_end: f64,
    xi: f64,
    xi_components: &'a [FourierSpec],
    realizations: usize,
    seed: u64,
    snapshot_times: &'a [f64],
    window_t0: f64,
    window_t1: f64,
    ic: Ic,
    multipliers: &'a [usize],
}

impl ExperimentConfig {
    fn preset_defaults(preset: Preset) -> Self {
        let full_scale_cells = vec![1000, 1500, 2000, 2500, 3000];
        let base = Self {
            preset,
            length: 40.0,
            alpha: 1.0,
            cells: full_scale_cells,
            dt: 5e-4,
            t_end: 20.0,
            xi: 0.0,
            xi_components: Vec::new(),
            realizations: 1,
            seed: 0,
            snapshot_times: vec![0.0, 20.0],
            window_t0: 15.0,
            window_t1: 20.0,
            output_dir: PathBuf::from("out"),
            jobs: 0,
            ic: Ic::Steep,
            multipliers: vec![100, 50, 25],
        };
        match preset {
            Preset::ConvergeDx => Self {
                cells: vec![1000, 2000, 4000, 8000],
                dt: 1e-5,
                t_end: 0.1,
                snapshot_times: Vec::new(),
                ic: Ic::Peakon,
                ..base
            },
            Preset::ConvergeDt => Self {
                cells: vec![4000],
                dt: 1e-5,
                t_end: 0.1,
                xi: 1.0,
                snapshot_times: Vec::new(),
                ic: Ic::Peakon,
                ..base
            },
            Preset::DeterministicSteep => base,
            Preset::DeterministicShallow => Self { ic: Ic::Shallow, ..base },
            Preset::Ensemble => Self {
                xi: 0.05,
                realizations: 100,
                snapshot_times: Vec::new(),
                ..base
            },
        }
    }

    fn apply_desk(&mut self) {
        match self.preset {
            Preset::ConvergeDx => self.cells = vec![1000, 2000, 4000],
            Preset::ConvergeDt => {}
            Preset::DeterministicSteep | Preset::DeterministicShallow => {
                self.cells = vec![500, 750, 1000];
            }
            Preset::Ensemble => {
                self.cells = vec![500, 750, 1000];
                self.realizations = 10;
            }
        }
    }

    pub fn echo(&self) -> ConfigEcho<'_> {
        ConfigEcho {
            preset: self.preset,
            length: self.length,
            alpha: self.alpha,
            cells: &self.cells,
            dt: self.dt,
            t_end: self.t_end,
            xi: self.xi,
            xi_components: &self.xi_components,
            realizations: self.realizations,
            seed: self.seed,
            snapshot_times: &self.snapshot_times,
            window_t0: self.window_t0,
            window_t1: self.window_t1,
            ic: self.ic,
            multipliers: &self.multipliers,
        }
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if !(self.length > 0.0) || !self.length.is_finite() {
            return usage(format!("L must be positive and finite, got {}", self.length));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return usage(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if self.cells.is_empty() {
            return usage("cells must not be empty");
        }
        if !self.cells.windows(2).all(|w| w[0] < w[1]) {
            return usage(format!("cells must be strictly increasing, got {:?}", self.cells));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return usage(format!("dt must be positive and finite, got {}", self.dt));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return usage(format!("t_end must be nonnegative and finite, got {}", self.t_end));
        }
        if !self.xi.is_finite() {
            return usage(format!("xi must be finite, got {}", self.xi));
        }
        if self.realizations < 1 {
            return usage("realizations must be at least 1");
        }
        for t in &self.snapshot_times {
            if !(*t >= 0.0) || !t.is_finite() {
                return usage(format!("snapshot time {t} must be nonnegative and finite"));
            }
        }
        if !self.window_t0.is_finite() || !self.window_t1.is_finite() || self.window_t0 > self.window_t1 {
            return usage(format!(
                "averaging window [{}, {}] must be finite and ordered",
                self.window_t0, self.window_t1
            ));
        }
        if self.multipliers.is_empty() {
            return usage("multipliers must not be empty");
        }
        if self.multipliers.iter().any(|&m| m == 0) {
            return usage("multipliers must be positive");
        }
        let mut seen = self.multipliers.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.multipliers.len() {
            return usage(format!("multipliers must be distinct, got {:?}", self.multipliers));
        }
        for spec in &self.xi_components {
            if spec.mode == 0 {
                return usage("xi_components modes must be at least 1");
            }
            if !spec.c.is_finite() || !spec.d.is_finite() || !spec.xi.is_finite() {
                return usage("xi_components entries must be finite");
            }
        }
        Ok(())
    }
}

/// Unvalidated command-line overrides, filled by clap in main.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// Flat key = value config file; flags still win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parameter preset to start from.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Desk-scale resolutions and realization counts.
    #[arg(long)]
    pub desk: bool,
    /// Cell counts, comma separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub cells: Option<Vec<usize>>,
    /// Domain length L.
    #[arg(long)]
    pub length: Option<f64>,
    /// Helmholtz length scale alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Time step (for converge-dt: the fine reference step).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Constant-noise amplitude xi (0 disables the constant component).
    #[arg(long)]
    pub xi: Option<f64>,
    /// Fourier noise components, comma-separated j:C:D:xi tuples.
    #[arg(long = "xi-components")]
    pub xi_components: Option<String>,
    /// Number of noise realizations (ensemble).
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Base RNG seed; realization r uses a seed derived from (seed, r).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Times at which full fields are written, comma separated.
    #[arg(long = "snapshot-times", value_delimiter = ',')]
    pub snapshot_times: Option<Vec<f64>>,
    /// Start of the Pi averaging window.
    #[arg(long = "window-t0")]
    pub window_t0: Option<f64>,
    /// End of the Pi averaging window.
    #[arg(long = "window-t1")]
    pub window_t1: Option<f64>,
    /// Directory for all output files.
    #[arg(long = "output-dir")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Initial profile, overriding the preset's choice.
    #[arg(long, value_enum)]
    pub ic: Option<Ic>,
    /// Coarse-step multiples of the fine dt (converge-dt only).
    #[arg(long, value_delimiter = ',')]
    pub multipliers: Option<Vec<usize>>,
}

/// One parsed config-file assignment.
struct FileEntry {
    key: String,
    value: String,
    line: usize,
}

fn parse_config_file(text: &str) -> Result<Vec<FileEntry>, UsageError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return usage(format!("config line {}: expected 'key = value', got '{line}'", idx + 1));
        };
        entries.push(FileEntry {
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            line: idx + 1,
        });
    }
    Ok(entries)
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<T, UsageError>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| UsageError(format!("config line {line}: bad value for {key}: {e}")))
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<Vec<T>, UsageError>
where
    T::Err: fmt::Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|part| parse_num::<T>(part.trim(), key, line)).collect()
}

fn parse_components(value: &str) -> Result<Vec<FourierSpec>, UsageError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|part| FourierSpec::parse(part.trim())).collect()
}

/// Builds the final configuration for a subcommand whose natural preset is
/// `default_preset`, reading the optional config file and applying flag
/// overrides.
pub fn resolve(default_preset: Preset, over: &Overrides) -> Result<ExperimentConfig, UsageError> {
    let entries = match &over.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| UsageError(format!("cannot read config file {}: {e}", path.display())))?;
            parse_config_file(&text)?
        }
        None => Vec::new(),
    };

    // The preset must be known before its defaults can be filled in.
    let mut preset = default_preset;
    for e in &entries {
        if e.key == "preset" {
            preset = Preset::parse(&e.value)?;
        }
    }
    if let Some(p) = over.preset {
        preset = p;
    }

    let mut cfg = ExperimentConfig::preset_defaults(preset);
    if over.desk {
        cfg.apply_desk();
    }

    for e in &entries {
        match e.key.as_str() {
            "preset" => {}
            "L" => cfg.length = parse_num(&e.value, "L", e.line)?,
            "alpha" => cfg.alpha = parse_num(&e.value, "alpha", e.line)?,
            "cells" => cfg.cells = parse_list(&e.value, "cells", e.line)?,
            "dt" => cfg.dt = parse_num(&e.value, "dt", e.line)?,
            "t_end" => cfg.t_end = parse_num(&e.value, "t_end", e.line)?,
            "xi" => cfg.xi = parse_num(&e.value, "xi", e.line)?,
            "xi_components" => cfg.xi_components = parse_components(&e.value)?,
            "realizations" => cfg.realizations = parse_num(&e.value, "realizations", e.line)?,
            "seed" => cfg.seed = parse_num(&e.value, "seed", e.line)?,
            "snapshot_times" => cfg.snapshot_times = parse_list(&e.value, "snapshot_times", e.line)?,
            "window_t0" => cfg.window_t0 = parse_num(&e.value, "window_t0", e.line)?,
            "window_t1" => cfg.window_t1 = parse_num(&e.value, "window_t1", e.line)?,
            "output_dir" => cfg.output_dir = PathBuf::from(&e.value),
            "jobs" => cfg.jobs = parse_num(&e.value, "jobs", e.line)?,
            other => {
                return usage(format!("config line {}: unknown key '{other}'", e.line));
            }
        }
    }

    if let Some(v) = &over.cells {
        cfg.cells = v.clone();
    }
    if let Some(v) = over.length {
        cfg.length = v;
    }
    if let Some(v) = over.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = over.dt {
        cfg.dt = v;
    }
    if let Some(v) = over.t_end {
        cfg.t_end = v;
    }
    if let Some(v) = over.xi {
        cfg.xi = v;
    }
    if let Some(v) = &over.xi_components {
        cfg.xi_components = parse_components(v)?;
    }
    if let Some(v) = over.realizations {
        cfg.realizations = v;
    }
    if let Some(v) = over.seed {
        cfg.seed = v;
    }
    if let Some(v) = &over.snapshot_times {
        cfg.snapshot_times = v.clone();
    }
    if let Some(v) = over.window_t0 {
        cfg.window_t0 = v;
    }
    if let Some(v) = over.window_t1 {
        cfg.window_t1 = v;
    }
    if let Some(v) = &over.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = over.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = over.ic {
        cfg.ic = v;
    }
    if let Some(v) = &over.multipliers {
        cfg.multipliers = v.clone();
    }

    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file from `path` only to surface key errors early.
#[cfg(test)]
fn check_config_file(path: &std::path::Path) -> Result<(), UsageError> {
    let over = Overrides { config: Some(path.to_path_buf()), ..Default::default() };
    resolve(Preset::DeterministicSteep, &over).map(|_| ())
}
