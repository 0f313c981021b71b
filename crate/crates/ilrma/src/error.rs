//! Library-wide error type.

use thiserror::Error;

/// Errors reported by separation, transform, and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal too short: need at least {needed} samples, got {got}")]
    SignalTooShort { needed: usize, got: usize },

    #[error("degenerate source {index}: separated output has zero power")]
    DegenerateSource { index: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("WAV error: {0}")]
    Wav(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
