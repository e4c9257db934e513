//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the model.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure failed (non-convergence, instability, singularity).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A configuration or input is invalid.
    #[error("validation error: {0}")]
    Validation(String),

    /// Two frequency responses do not share a grid.
    #[error("frequency grids differ (block {index})")]
    GridMismatch { index: usize },

    /// No −3 dB crossing was found on the frequency grid.
    #[error("bandwidth exceeds grid: no -3 dB crossing below {max_freq:.4e} Hz")]
    BandwidthExceedsGrid { max_freq: f64 },

    /// A parse failure in a text input, with 1-based line number.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit code: 2 for validation/input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::BandwidthExceedsGrid { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
