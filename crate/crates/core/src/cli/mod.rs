//! The `idxtrack` command-line pipeline.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;

use clap::Parser;
use thiserror::Error;

use crate::encoding::EncodingError;
use crate::market_data::DataError;
use crate::objectives::ObjectiveError;
use crate::solver::SolverError;

pub use config::{Args, Command, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("no feasible solution: {0}")]
    NoFeasible(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl CliError {
    /// 0 success, 1 usage or validation, 2 no feasible solution, 3 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::Validation(_)
            | CliError::Encoding(_)
            | CliError::Objective(_)
            | CliError::Solver(_) => 1,
            CliError::NoFeasible(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();

    match RunConfig::resolve(args).and_then(|cfg| commands::execute(&cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("idxtrack: {e}");
            e.exit_code()
        }
    }
}
