//! Error type shared across the crate.
//!
//! Errors fall into three families that map onto CLI exit codes:
//! configuration (2), data (3), and numeric (4).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid options, grids, or dimensions supplied by the caller.
    #[error("config error: {0}")]
    Config(String),

    /// Problems with input data: missing columns, gaps, NaNs, bad windows.
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure: non-positive-definite matrices, degenerate
    /// densities, overflowing simulations.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
