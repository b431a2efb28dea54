//! Index error type.

use thiserror::Error;

/// Everything that can go wrong building, querying, or persisting an index.
#[derive(Debug, Error)]
pub enum IndexError {
    #[error("invalid index config: {0}")]
    InvalidConfig(String),
    #[error("vector has dimension {got}, index expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("id {0} is already present")]
    DuplicateId(u32),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("corrupt index file: {0}")]
    Persistence(String),
    #[error("index file checksum mismatch (file is corrupt or was edited)")]
    ChecksumMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
