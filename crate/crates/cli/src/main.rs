//! `ctexp`: simulate, design, filter, identify and verify experiments on
//! continuous-time LTI systems.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 numerical or
//! design failure, 4 a verification check failed, 1 any other I/O problem.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctexp::filters::FilterFamily;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Failure(String),
    Verification(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Failure(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Failure(m) => write!(f, "failed: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<ctexp::Error> for CliError {
    fn from(e: ctexp::Error) -> Self {
        use ctexp::Error::*;
        match e {
            InvalidArgument(_) | DimensionMismatch(_) | OutOfDomain { .. } => CliError::Validation(e.to_string()),
            NumericalFailure(_) | PreconditionViolated(_) | DesignFailure { .. } | Internal(_) => {
                CliError::Failure(e.to_string())
            }
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ctexp", version, about = "Online experiment design and filtered-data identification")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for every file written or read by default.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Use the seeded random input policy with this seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative rank tolerance.
    #[arg(long, global = true)]
    rtol: Option<f64>,
    /// Quadrature panels per sampling interval.
    #[arg(long, global = true)]
    panels: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the configured input; writes trajectory.csv and sampled.json.
    Simulate {
        /// Trajectory points per sampling interval.
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
    /// Run the online input design; writes design.json.
    Design,
    /// Compute filtered data; writes filtered.json.
    Filter {
        /// Sampled dataset or design result providing the inputs and initial state.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Identify (A, B) from filtered data; writes identification.json.
    Identify {
        /// Filtered dataset, default <out>/filtered.json.
        #[arg(long)]
        filtered: Option<PathBuf>,
        /// Report the error against the configured system.
        #[arg(long)]
        truth: bool,
    },
    /// Run the consistency checks; writes verify.csv.
    Verify {
        /// Check this filtered dataset instead of recomputing it.
        #[arg(long)]
        filtered: Option<PathBuf>,
    },
    /// Reproduce the aircraft example; writes demo_aircraft.csv.
    DemoAircraft,
    /// Filter-function utilities.
    Filters {
        #[command(subcommand)]
        command: FiltersCommand,
    },
}

#[derive(Subcommand, Debug)]
enum FiltersCommand {
    /// Write (t, g_1(t), ..., g_M(t)) samples to filters_<family>.csv.
    PlotData {
        #[arg(long)]
        family: FilterFamily,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        period: f64,
        /// Number of filters M.
        #[arg(long, default_value_t = 4)]
        count: usize,
        /// Number of intervals N; defaults to M.
        #[arg(long)]
        intervals: Option<usize>,
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Simulate { points } => commands::simulate(g, points),
        Command::Design => commands::design(g),
        Command::Filter { dataset } => commands::filter(g, dataset.as_deref()),
        Command::Identify { filtered, truth } => commands::identify(g, filtered.as_deref(), truth),
        Command::Verify { filtered } => commands::verify(g, filtered.as_deref()),
        Command::DemoAircraft => commands::demo_aircraft(g),
        Command::Filters {
            command:
                FiltersCommand::PlotData {
                    family,
                    rho,
                    period,
                    count,
                    intervals,
                    points,
                },
        } => commands::plot_data(g, family, rho, period, count, intervals.unwrap_or(count), points),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
