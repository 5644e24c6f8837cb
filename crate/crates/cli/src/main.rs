use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

mod couple;
mod layered;
mod report;
mod spec;
mod spectrum;
mod verify;

use report::Report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("check failed: {0}")]
    Check(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("numeric degeneracy: {0}")]
    Numeric(String),
    #[error("constraint violation: {0}")]
    Constraint(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Constraint(_) => 4,
        }
    }
}

impl From<infocoupling::Error> for CliError {
    fn from(e: infocoupling::Error) -> Self {
        use infocoupling::Error as E;
        match e {
            E::SingularWeight { .. } | E::DegenerateOutput { .. } | E::DegenerateLayer { .. } | E::Budget { .. } => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Constraint(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "infocoupling", version, about = "Local information coupling over discrete memoryless channels")]
struct Cli {
    /// Worker threads for data-parallel solvers and oracles.
    #[arg(long, global = true, env = "INFOCOUPLING_THREADS", default_value_t = 1,
          value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,

    /// Record wall-clock time in the report (breaks byte-for-byte reproducibility).
    #[arg(long, global = true)]
    timing: bool,

    /// Write the report to a file instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectrum of the DTM, top-pair residuals, contraction coefficient and maximal correlation.
    Spectrum {
        spec: PathBuf,
        /// Significant digits for floats in the report.
        #[arg(long, default_value_t = 17, value_parser = clap::value_parser!(u8).range(1..=17))]
        precision: u8,
    },
    /// Solve a coupling problem.
    Couple {
        /// One spec, or one spec per receiver in broadcast mode.
        #[arg(required = true)]
        specs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::P2p)]
        mode: Mode,
        #[arg(long, default_value_t = infocoupling::oracles::DEFAULT_EPSILON)]
        epsilon: f64,
        /// Broadcast only: also solve the single-direction restriction.
        #[arg(long)]
        single_direction: bool,
    },
    /// Run property suites against tolerances.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Random instances per check.
        #[arg(long, default_value_t = 20)]
        budget: usize,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Two-layer plan on the nested ternary channel, optionally simulated.
    Layered {
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        simulate: bool,
        #[arg(long, default_value_t = 400)]
        n1: usize,
        #[arg(long, default_value_t = 50)]
        k1: usize,
        /// Layer-2 pieces per sub-block; n2 = n1 / k2.
        #[arg(long, default_value_t = 4)]
        k2: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = layered::DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    P2p,
    Broadcast,
    Mac,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Tensor,
    Oracle,
    All,
}

fn configure_threads(threads: u16) -> Result<(), CliError> {
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads as usize)
        .build_global()
        .map_err(|e| CliError::Constraint(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

/// Runs the command; a failed check still yields a report.
fn run(cli: &Cli) -> Result<(Report, usize, Option<CliError>), CliError> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Spectrum { spec, precision } => Ok((spectrum::run(spec)?, *precision as usize, None)),
        Command::Couple { specs, mode, epsilon, single_direction } => {
            Ok((couple::run(specs, *mode, *epsilon, *single_direction)?, 17, None))
        }
        Command::Verify { suite, seed, budget, inject_fault } => {
            let (report, failure) = verify::run(*suite, *seed, *budget, *inject_fault)?;
            Ok((report, 17, failure))
        }
        Command::Layered { eta, gamma, simulate, n1, k1, k2, trials, seed } => {
            let sim = simulate.then_some(layered::SimArgs { n1: *n1, k1: *k1, k2: *k2, trials: *trials, seed: *seed });
            Ok((layered::run(*eta, *gamma, sim)?, 17, None))
        }
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
    let start = Instant::now();
    let (mut report, digits, failure) = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("infocoupling: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    if cli.timing {
        report.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    let text = report.render(digits);
    match &cli.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("infocoupling: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => print!("{text}"),
    }
    match failure {
        Some(e) => {
            eprintln!("infocoupling: {e}");
            ExitCode::from(e.exit_code())
        }
        None => ExitCode::SUCCESS,
    }
}
