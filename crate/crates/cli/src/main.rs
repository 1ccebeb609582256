//! Command-line front end for the fitting library: single-candidate fits,
//! bank benchmarking, trajectory re-examination, landscape slicing, and
//! synthetic bank generation. Every command emits a deterministic report
//! (timing never enters the report; request it on stderr with `--timing`).

mod cmd_bench;
mod cmd_fit;
mod cmd_genbank;
mod cmd_landscape;
mod cmd_lostrate;
mod manifest;
mod optparse;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Errors mapped to process exit codes: usage problems exit 2, input-data
/// problems exit 3. Successful runs — including penalty-scored fits — exit 0.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

#[derive(Parser)]
#[command(
    name = "sagefit",
    version,
    about = "Parameter-fitting evaluator for symbolic-regression candidate equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one candidate expression to a CSV dataset
    Fit(cmd_fit::FitArgs),
    /// Score a candidate bank with one or more evaluators
    Bench(cmd_bench::BenchArgs),
    /// Refit a recorded search trajectory and measure discarded winners
    Lostrate(cmd_lostrate::LostRateArgs),
    /// Tabulate a 2-D slice of the full-parameter loss landscape
    Landscape(cmd_landscape::LandscapeArgs),
    /// Generate a synthetic candidate bank with datasets
    GenBank(cmd_genbank::GenBankArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit::run(args),
        Command::Bench(args) => cmd_bench::run(args),
        Command::Lostrate(args) => cmd_lostrate::run(args),
        Command::Landscape(args) => cmd_landscape::run(args),
        Command::GenBank(args) => cmd_genbank::run(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
