//! `dynbc` — command-line harness for the finite-element solver.
//!
//! Subcommands: `solve` (single run with VTK/CSV artifacts), `convergence`
//! (spatial or temporal refinement study), `stability` (splitting stability
//! sweep), `list-problems`.  All three file-driven commands take one
//! INI-style configuration file; `dynbc solve --help` and the repository
//! README document the keys.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 acceptance-threshold violation.  The environment variable
//! `DYNBC_THREADS` caps how many ladder rungs of a convergence study run in
//! parallel.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use commands::CliError;
use config::Config;

#[derive(Parser)]
#[command(
    name = "dynbc",
    version,
    about = "Finite-element solver for parabolic problems with dynamic boundary conditions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one (mesh, integrator) combination; write VTK snapshots and report.csv
    Solve {
        /// INI configuration file
        config: PathBuf,
    },
    /// Run a spatial or temporal refinement study; write convergence.csv
    Convergence {
        /// INI configuration file
        config: PathBuf,
    },
    /// Sweep the splitting stability verifier over meshes, step sizes and
    /// random block systems; write stability.csv
    Stability {
        /// INI configuration file
        config: PathBuf,
    },
    /// List the built-in problems
    ListProblems,
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve { config } => commands::cmd_solve(&Config::load(&config)?),
        Command::Convergence { config } => commands::cmd_convergence(&Config::load(&config)?),
        Command::Stability { config } => commands::cmd_stability(&Config::load(&config)?),
        Command::ListProblems => {
            commands::list_problems();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code as u8)
        }
    }
}
