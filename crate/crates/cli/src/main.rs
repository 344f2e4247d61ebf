//! `fngw`: command-line front end for FNGW distances, barycenters,
//! dictionaries, clustering and graph prediction.

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use crate::config::Cli;

/// Process exit code of a failed run.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, unreadable or malformed input.
    Invalid(String),
    /// A solver failed numerically.
    Solver(String),
}

impl From<fngw::Error> for Failure {
    fn from(e: fngw::Error) -> Self {
        if e.is_solver_failure() {
            Failure::Solver(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.global.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(2)
        }
    }
}
