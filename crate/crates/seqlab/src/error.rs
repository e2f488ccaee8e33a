//! Error taxonomy shared by every subsystem.
//!
//! Errors carry a category that maps onto the CLI exit codes:
//! precondition violations exit 2, numeric/calibration failures exit 3,
//! capacity overruns exit 4.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition (bad parameter,
    /// degenerate model, nonpositive drift, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A numeric routine failed to converge or produced an unusable value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A stochastic calibration loop could not reach its target.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// A state space, subset class, or path count exceeded a hard cap.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Configuration file problems.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 precondition, 3 numeric/calibration,
    /// 4 capacity.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Precondition(_) | Error::Config(_) | Error::Io(_) => 2,
            Error::Numeric(_) | Error::Calibration(_) => 3,
            Error::Capacity(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
