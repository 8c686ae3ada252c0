//! Error type shared across the testbed.

use thiserror::Error;

/// All errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: shape mismatches, out-of-range labels,
    /// inconsistent model specs, malformed experiment configs.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called in the wrong order (e.g. backward without a
    /// recorded forward pass).
    #[error("state error: {0}")]
    State(String),

    /// Non-finite values surfaced where finite math was required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training diverged; carries the epoch (or time step) where it happened.
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// A binary file (weights, dataset) failed to parse or round-trip.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for configuration/format/state
    /// problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::Training { .. } => 3,
            _ => 2,
        }
    }
}
