//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not satisfy an operation's shape contract.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A parameter value is outside its legal range (probabilities, extents, ...).
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A computation produced NaN or Inf where finite values are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A class label is outside `[0, n_classes)`.
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    /// Malformed input file (bad magic, truncation, inconsistent counts).
    #[error("format error: {0}")]
    Format(String),

    /// Invalid or inconsistent experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint cannot be read or does not match the running configuration.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
