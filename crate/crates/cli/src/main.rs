//! `irf`: verification suites, simulations, observable comparisons and
//! asymptotic studies for stochastic IRF models and dynamic exclusion
//! processes.
//!
//! Exit codes: 0 when every hard check passes, 1 when a check fails (the
//! failing report names go to standard error), 2 for usage and
//! configuration errors.

mod commands;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use irf_core::IrfError;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "irf", version, about = "Stochastic IRF models and dynamic exclusion processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Named parameter preset (trig-admissible, dyn6v-positive, rational-positive).
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Parameter pack in JSON, used instead of a preset.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo samples.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    /// Output file (standard output by default).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Overrides the default tolerances; the value is recorded in the reports.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a verification suite and print its check reports.
    Verify(commands::VerifyArgs),
    /// Simulate trajectories and write heights as CSV.
    Simulate(commands::SimulateArgs),
    /// Evaluate an observable average by several methods and compare them.
    Observables(commands::ObservablesArgs),
    /// Finite-size studies of the hydrodynamic and regime IV limits.
    Asymptotics(commands::AsymptoticsArgs),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] IrfError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(IrfError::Config(_) | IrfError::InvalidInput(_) | IrfError::InvalidParameter(_)) => 2,
            _ => 1,
        }
    }
}

/// What a command produced: its output bytes and the names of failed checks.
pub struct Outcome {
    pub output: Vec<u8>,
    pub failures: Vec<String>,
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Verify(args) => commands::verify(&args, &cli.common),
        Command::Simulate(args) => commands::simulate(&args, &cli.common),
        Command::Observables(args) => commands::observables(&args, &cli.common),
        Command::Asymptotics(args) => commands::asymptotics(&args, &cli.common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.common.out.clone();
    match run(cli) {
        Ok(outcome) => {
            let written = match &out {
                Some(path) => std::fs::write(path, &outcome.output),
                None => std::io::stdout().write_all(&outcome.output),
            };
            if let Err(e) = written {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(1);
            }
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for name in &outcome.failures {
                    eprintln!("FAILED {name}");
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
