use thiserror::Error;

/// Errors raised by the simulators, kernel maps and the fixed-point driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dynamics diverged at step {step} (time {time:.4}): {reason}")]
    Divergence { step: usize, time: f64, reason: String },

    #[error("kernel is not positive semidefinite (Cholesky failed after jitter {jitter:e})")]
    KernelNotPsd { jitter: f64 },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fixed-point iteration failed to converge: {reason} (distances: {distances:?})")]
    NonConvergence { reason: String, distances: Vec<f64> },

    #[error("malformed kernel container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from a numerical failure of the dynamics or
    /// solvers, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::KernelNotPsd { .. } | Error::Numerical(_) | Error::NonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
