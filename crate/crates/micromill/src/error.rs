//! Crate-wide error type.
//!
//! All lengths in error messages are micrometres, pressures pascals, matching
//! the internal unit convention of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violated a precondition (out-of-domain
    /// point, non-positive length, bad sample step, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An input combination put a formula outside its mathematical domain
    /// (e.g. the contact chord square root degenerating).
    #[error("domain error: {0}")]
    Domain(String),

    /// The model produced a physically inconsistent result from inputs that
    /// passed validation; signals inconsistent material data.
    #[error("model violation: {0}")]
    ModelViolation(String),

    /// Grain-map calibration could not match the target intercept length
    /// within the iteration budget.
    #[error(
        "calibration failed for phase '{phase}': achieved {achieved:.4} um \
         vs target {target:.4} um after {iterations} iterations"
    )]
    Calibration {
        phase: String,
        target: f64,
        achieved: f64,
        iterations: usize,
    },

    /// Scenario-config parse or validation failure. `line` is 1-based;
    /// line 0 marks document-level problems (e.g. missing keys).
    #[error("config error (line {line}): {message}")]
    Config { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI: 2 config/argument error,
    /// 3 model violation, 4 i/o error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) => 2,
            Error::Domain(_) | Error::ModelViolation(_) | Error::Calibration { .. } => 3,
            Error::Io(_) => 4,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: msg.into(),
        }
    }
}
