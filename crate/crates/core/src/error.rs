//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar argument fell outside its documented domain.
    #[error("{what} out of domain: {value}")]
    OutOfDomain { what: &'static str, value: f64 },

    /// Basis index exceeds the curve degree.
    #[error("basis index {index} out of range for degree {degree}")]
    IndexOutOfRange { index: usize, degree: usize },

    /// Construction-time validation failure.
    #[error("{0}")]
    InvalidInput(String),

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The SNR ratio diverges at s = 1 where sigma vanishes.
    #[error("snr ratio is infinite at s = 1")]
    SnrInfinite,

    /// Requested SNR value cannot be inverted.
    #[error("snr value {y} outside the invertible range")]
    SnrOutOfRange { y: f64 },

    /// Adaptive step size collapsed below the minimum.
    #[error("integration step underflow at s = {s:.6} (step {step:.3e}); field appears stiff")]
    Stiff { s: f64, step: f64 },

    /// Training loss exploded past the abort threshold.
    #[error("training diverged: loss {loss:.3e} exceeds {limit:.1e} at epoch {epoch}")]
    Diverged { loss: f64, limit: f64, epoch: usize },

    /// Finite-difference gradient produced a non-finite coordinate.
    #[error("gradient is non-finite at coordinate {coord}")]
    BadGradient { coord: usize },

    /// Scheduler (de)serialization failure.
    #[error("scheduler persistence: {0}")]
    Persistence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
