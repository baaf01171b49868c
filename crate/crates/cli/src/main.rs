//! `didpanel`: simulate claims panels, estimate event studies, run the
//! reform DiD and coverage studies.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation
//! failure.

mod coverage;
mod dml;
mod error;
mod estimate;
mod input;
mod output;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "didpanel", version = output_version(), about)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Record per-stage wall-clock timings in report.json. Off by default so
    /// reruns stay byte-identical.
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a claims panel with a known event-study path.
    Simulate(simulate::SimulateArgs),
    /// Smooth claims, build the panel and estimate the event study.
    Estimate(estimate::EstimateArgs),
    /// Cross-fitted DiD around a reform date.
    Dml(dml::DmlArgs),
    /// Monte Carlo coverage of the uniform band under a null DGP.
    Coverage(coverage::CoverageArgs),
}

fn output_version() -> &'static str {
    concat!(env!("CARGO_PKG_VERSION"), " (", env!("DIDPANEL_GIT_DESCRIBE"), ")")
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot set up {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate::run(a, cli.timings),
        Command::Estimate(a) => estimate::run(a, cli.timings),
        Command::Dml(a) => dml::run(a, cli.timings),
        Command::Coverage(a) => coverage::run(a, cli.timings),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("didpanel: {e}");
            e.exit_code()
        }
    }
}
