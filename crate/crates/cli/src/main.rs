//! Batch front end: load an instance, run one pipeline stage, write
//! plot-ready data and verdict records.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::InstanceConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] impulsive_ap::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn status(&self) -> (&'static str, u8) {
        match self {
            CliError::Validation(_) => ("validation", 2),
            CliError::Core(e) if e.is_numerical() => ("numerical", 3),
            CliError::Core(impulsive_ap::Error::Io(_)) | CliError::Io(_) => ("io", 1),
            CliError::Core(_) => ("validation", 2),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "impulsive-ap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Instance description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dichotomy fit, constant bundle and smallness verdicts.
    Constants(Common),
    /// Direct simulation with impulse events.
    Simulate(Common),
    /// Beating certificates for the surfaces of the window.
    Certify(Common),
    /// Almost periodic solution by the two-level fixed point.
    SolveAp(Common),
    /// Almost-periodicity diagnostics of the instance data.
    AnalyzeAp(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, stage): (Common, fn(&commands::Context) -> Result<(), CliError>) =
        match cli.command {
            Command::Constants(c) => (c, commands::constants),
            Command::Simulate(c) => (c, commands::simulate),
            Command::Certify(c) => (c, commands::certify),
            Command::SolveAp(c) => (c, commands::solve_ap),
            Command::AnalyzeAp(c) => (c, commands::analyze_ap),
        };
    let cfg = InstanceConfig::load(&common.config)?;
    let ctx = commands::Context::new(cfg, common.seed, &common.out)?;
    stage(&ctx)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => {
            println!("status=ok");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (kind, code) = e.status();
            let reason = e.to_string().replace('\n', " ");
            eprintln!("status={kind} code={code} reason={reason}");
            ExitCode::from(code)
        }
    }
}
