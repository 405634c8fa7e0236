//! `wavecal`: run simulation scenarios, calibrate real panels and dump test
//! signals.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod calibrate;
mod failure;
mod manifest;
mod signal;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "wavecal",
    version,
    about = "Wavelet calibration of aggregated functional data"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Master seed; overrides the seed of every scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Lift desk-scale defaults to the full chain lengths and replication counts.
    #[arg(long = "paper-scale", global = true)]
    pub full_scale: bool,
    /// Only report errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every scenario of a scenario file.
    Simulate(simulate::SimulateArgs),
    /// Run the `[[comparison]]` pairs of a scenario file on shared data.
    Compare(simulate::CompareArgs),
    /// Estimate component curves from a panel CSV and a weights CSV.
    Calibrate(calibrate::CalibrateArgs),
    /// Write a test signal on the grid t = m/M as CSV.
    Signal(signal::SignalArgs),
}

/// Output directory shared by the writing commands.
#[derive(Debug, Clone, Args)]
pub struct OutDir {
    /// Directory receiving the CSV files and manifest.json.
    #[arg(long, short)]
    pub out: PathBuf,
}

fn init_logging(quiet: bool) {
    let level = if quiet {
        log::LevelFilter::Error
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.global.quiet);
    let result: Result<(), Failure> = match &cli.command {
        Command::Simulate(args) => simulate::simulate(args, &cli.global),
        Command::Compare(args) => simulate::compare(args, &cli.global),
        Command::Calibrate(args) => calibrate::run(args, &cli.global),
        Command::Signal(args) => signal::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("wavecal: error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
