//! Error type shared by the core encoder, scoring and loss machinery.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),

    #[error("sequence of {len} tokens (plus CLS) exceeds max length {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("zero-token input: {0}")]
    EmptyInput(String),

    #[error("empty candidate list")]
    EmptyCandidates,

    #[error("zero vector passed to {0}")]
    ZeroVector(&'static str),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
