//! `ope-lab` command-line front end.
//!
//! Exit codes: 0 success, 1 a check failed, 2 bad config or arguments,
//! 3 runtime or support error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use ope_lab::montecarlo::with_workers;
use ope_lab::OpeError;

mod commands;
mod config;
mod output;

use output::{Format, Verdict};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(OpeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ope-lab", version, about = "Tabular off-policy evaluation lab")]
struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Globals {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file, or directory for `sweep`. Defaults to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a problem's invariants.
    Validate,
    /// Exact or Monte Carlo moments of the estimators on one problem.
    Evaluate,
    /// The three two-step counterexamples, cross-checked against their MDPs.
    Counterexamples,
    /// Variance against horizon, with fits.
    Sweep,
    /// Variance-ordering conditions on one problem or a population.
    Conditions,
    /// Exact SIS law on the two-lane problem.
    TwoLane,
    /// Empirical log-likelihood-ratio rate against the KL rate.
    RateCheck,
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let g = &cli.globals;
    if g.workers == Some(0) {
        return Err(CliError::Config("--workers must be positive".into()));
    }
    let result = with_workers(g.workers.unwrap_or(0), || match cli.command {
        Command::Validate => commands::validate(g),
        Command::Evaluate => commands::evaluate(g),
        Command::Counterexamples => commands::counterexamples(g),
        Command::Sweep => commands::sweep(g),
        Command::Conditions => commands::conditions(g),
        Command::TwoLane => commands::two_lane_cmd(g),
        Command::RateCheck => commands::rate_check(g),
    })??;
    result.emit(g.out.as_deref())?;
    for line in &result.summary {
        eprintln!("{line}");
    }
    Ok(match &result.verdict {
        Verdict::Ok => 0,
        Verdict::CheckFailed(why) => {
            eprintln!("check failed: {why}");
            1
        }
        Verdict::RuntimeFailed(why) => {
            eprintln!("error: {why}");
            3
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
