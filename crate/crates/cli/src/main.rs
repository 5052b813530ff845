//! `netstab`: superoperator extraction, calibration, duration sampling and
//! surface-code sweeps from the command line.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Settings;

#[derive(Debug, Parser)]
#[command(name = "netstab", version, about = "Stabilizer measurement over a noisy four-cell network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact error superoperator of one protocol at one noise point.
    Extract(RunArgs),
    /// Per-level success probabilities against the published values.
    Calibrate(RunArgs),
    /// Completion-time statistics under failure-reset semantics.
    Duration(RunArgs),
    /// Logical error rate of one lattice memory experiment.
    Sample(RunArgs),
    /// Sweep of the local error rate at fixed network noise.
    SweepLocal(RunArgs),
    /// Sweep of the network error rate at fixed local noise.
    SweepNetwork(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// TOML file with settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

/// Why a run stopped; each kind has its own exit status.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
    Budget(String),
    Unresolved(String),
    Calibration(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Budget(_) => 3,
            Failure::Unresolved(_) => 4,
            Failure::Calibration(_) => 5,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
            Failure::Budget(m) => write!(f, "truncation budget exceeded: {m}"),
            Failure::Unresolved(m) => write!(f, "threshold unresolved: {m}"),
            Failure::Calibration(m) => write!(f, "calibration mismatch: {m}"),
        }
    }
}

impl From<netstab::Error> for Failure {
    fn from(e: netstab::Error) -> Self {
        use netstab::Error as E;
        match e {
            E::Contract(_) | E::Parse(_) | E::InvalidProtocol(_) | E::QuantileOutOfRange(_) => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (name, args) = match cli.command {
        Command::Extract(a) => ("extract", a),
        Command::Calibrate(a) => ("calibrate", a),
        Command::Duration(a) => ("duration", a),
        Command::Sample(a) => ("sample", a),
        Command::SweepLocal(a) => ("sweep-local", a),
        Command::SweepNetwork(a) => ("sweep-network", a),
    };
    let base = match &args.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let settings = base.overlaid(&args.settings);
    if let Some(n) = settings.workers {
        if n == 0 {
            return Err(Failure::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("cannot start workers: {e}")))?;
    }
    commands::dispatch(name, settings)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
