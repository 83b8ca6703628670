//! `becsim`: runs, comparison pairs, parameter sweeps and the verification
//! suite for the photon-kinetics simulator.
//!
//! Exit codes: 0 all checks pass (warnings allowed), 1 a check failed,
//! 2 configuration or I/O error, 3 solver abort.

use std::path::PathBuf;
use std::process::ExitCode;

use becsim_core::verify::{Level, Status};
use becsim_core::Error;
use clap::{Parser, Subcommand};

mod commands;
mod output;

#[derive(Parser)]
#[command(
    name = "becsim",
    version,
    about = "Simulate and audit the photon-kinetics equation"
)]
struct Cli {
    /// Directory for CSV and manifest output.
    #[arg(
        long,
        global = true,
        env = "BECSIM_OUT_DIR",
        default_value = "becsim-out"
    )]
    out_dir: PathBuf,

    /// Worker threads for sweeps and verification (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Multiplies the discretisation tolerance constant.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and audit it.
    Run { config: PathBuf },
    /// Run [initial] and [initial_b] in lockstep and check stability.
    Compare { config: PathBuf },
    /// Run the [sweep] parameter grid.
    Sweep { config: PathBuf },
    /// Run the verification suite.
    Verify {
        /// Desk-scale suite (default).
        #[arg(long, conflicts_with = "full")]
        quick: bool,
        /// Adds three-level refinement studies.
        #[arg(long)]
        full: bool,
    },
}

pub struct Globals {
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub tol_scale: f64,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Abort(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Abort(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "{m}"),
            CliError::Abort(m) => write!(f, "solver abort: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Config(m),
            Error::Io(e) => CliError::Io(e.to_string()),
            Error::InvalidParameter(_)
            | Error::Table(_)
            | Error::TableCoverage { .. }
            | Error::CutoffBlowUp { .. } => CliError::Config(e.to_string()),
            other => CliError::Abort(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if !(cli.tol_scale > 0.0 && cli.tol_scale.is_finite()) {
        eprintln!("error: --tol-scale must be > 0, got {}", cli.tol_scale);
        return ExitCode::from(2);
    }
    let globals = Globals {
        out_dir: cli.out_dir,
        jobs: cli.jobs,
        tol_scale: cli.tol_scale,
    };
    let result = match &cli.command {
        Command::Run { config } => commands::cmd_run(config, &globals),
        Command::Compare { config } => commands::cmd_compare(config, &globals),
        Command::Sweep { config } => commands::cmd_sweep(config, &globals),
        Command::Verify { full, .. } => {
            let level = if *full { Level::Full } else { Level::Quick };
            commands::cmd_verify(level, &globals)
        }
    };
    match result {
        Ok(Status::Fail) => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
