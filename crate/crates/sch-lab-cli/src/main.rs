//! Command-line harness for the stochastic Camassa-Holm laboratory.
//!
//! Subcommands map onto the experiment runners; parameters come from a
//! preset, optionally a flat `key = value` config file, and flags, in that
//! order of precedence. Exit codes: 0 success, 2 usage or configuration
//! errors, 1 runtime failures.

mod config;
mod experiments;
mod output;

use clap::Parser;
use config::{Overrides, Preset};
use experiments::CliError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "sch-lab",
    version,
    about = "Simulation experiments for a stochastic Camassa-Holm equation",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Run the configured resolutions once; write fields and diagnostics.
    Simulate(Overrides),
    /// Spatial convergence sweep against the peakon oracle.
    ConvergeDx(Overrides),
    /// Temporal convergence sweep with coupled coarsened paths.
    ConvergeDt(Overrides),
    /// Fan out noise realizations; histogram Pi and omega.
    Ensemble(Overrides),
    /// Recompute Pi and omega from stored diagnostics CSV files.
    Diagnose(DiagnoseArgs),
}

#[derive(clap::Args)]
struct DiagnoseArgs {
    /// Directories containing diagnostics_n<cells>.csv files.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Start of the Pi averaging window.
    #[arg(long = "window-t0", default_value_t = 15.0)]
    window_t0: f64,
    /// End of the Pi averaging window.
    #[arg(long = "window-t1", default_value_t = 20.0)]
    window_t1: f64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(over) => {
            let cfg = config::resolve(Preset::DeterministicSteep, &over)?;
            experiments::run_simulate(&cfg)
        }
        Command::ConvergeDx(over) => {
            let cfg = config::resolve(Preset::ConvergeDx, &over)?;
            experiments::run_converge_dx(&cfg)
        }
        Command::ConvergeDt(over) => {
            let cfg = config::resolve(Preset::ConvergeDt, &over)?;
            experiments::run_converge_dt(&cfg)
        }
        Command::Ensemble(over) => {
            let cfg = config::resolve(Preset::Ensemble, &over)?;
            experiments::run_ensemble(&cfg)
        }
        Command::Diagnose(args) => {
            if args.window_t0 > args.window_t1 || !args.window_t0.is_finite() || !args.window_t1.is_finite() {
                return Err(CliError::Usage(format!(
                    "averaging window [{}, {}] must be finite and ordered",
                    args.window_t0, args.window_t1
                )));
            }
            experiments::diagnose(&args.dirs, (args.window_t0, args.window_t1))
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    };
    std::process::exit(code);
}
