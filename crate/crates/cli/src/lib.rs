//! Command-line front end: configuration files and subcommands.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{CompareArgs, ExhaustiveArgs, OptimizeArgs, ReportArgs, ScreenArgs, ScreenVsBoArgs};
use crate::config::ConfigError;

#[derive(Debug, Parser)]
#[command(name = "confopt", version, about = "Screen, search and compare resource configurations against an SLO")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Screen parameters with elementary effects and write a reduced config.
    Screen(ScreenArgs),
    /// Run the configured optimizer for nbOfIterations x nbOfSamplesPerIteration samples.
    Optimize(OptimizeArgs),
    /// Evaluate every configuration of the space into a dataset.
    Exhaustive(ExhaustiveArgs),
    /// Replay a dataset with many seeded runs per optimizer.
    Compare(CompareArgs),
    /// Write the latency CDF and summary of a dataset.
    Report(ReportArgs),
    /// Screening plus BO against standalone BO with matched budgets.
    ScreenVsBo(ScreenVsBoArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Screen(a) => commands::screen(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Exhaustive(a) => commands::exhaustive(a),
        Command::Compare(a) => commands::compare_cmd(a),
        Command::Report(a) => commands::report_cmd(a),
        Command::ScreenVsBo(a) => commands::screen_vs_bo(a),
    }
}

/// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
