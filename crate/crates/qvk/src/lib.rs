//! Command-line front end for `qvk-core`: JSON and CSV formats, report
//! writers and the `qvk` subcommands.

pub mod cli;
pub mod commands;
pub mod dto;
pub mod error;
pub mod output;

use std::process::ExitCode;

pub use error::{CliError, CliResult};

/// Runs a parsed command line; errors are printed to stderr and turned into
/// the matching exit code.
pub fn run(cli: cli::Cli) -> ExitCode {
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qvk: {e}");
            e.exit_code()
        }
    }
}
