//! Library half of the `ifp` command-line tool: configuration parsing, the
//! file formats the pipeline speaks (IFPM matrices, 16-bit PGM previews,
//! positions/sweep/quality CSV), and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod io;

use std::fmt;

/// Errors carrying the process exit code policy: 2 for configuration
/// problems, 3 for data/format problems, 4 for numerical degeneracies.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Degenerate(msg) => write!(f, "numerical degeneracy: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ifp::Error> for CliError {
    fn from(err: ifp::Error) -> Self {
        if err.is_degenerate() {
            CliError::Degenerate(err.to_string())
        } else {
            CliError::Data(err.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
