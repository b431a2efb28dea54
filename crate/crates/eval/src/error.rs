//! Error type shared by metrics, statistics, and fold splitting.

use thiserror::Error;
use treble_core::CoreError;

/// Everything that can go wrong while evaluating a model.
#[derive(Debug, Error)]
pub enum EvalError {
    /// Paired statistics need two samples of the same length.
    #[error("paired samples differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    /// An operation was handed fewer data points than it needs.
    #[error("{what} needs at least {needed} values, got {got}")]
    TooFewValues {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    /// Confidence level must lie strictly between 0 and 1.
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    /// A zero pooled standard deviation makes Cohen's d undefined.
    #[error("pooled standard deviation is zero; Cohen's d is undefined")]
    ZeroPooledSd,
    /// The evaluation set is empty.
    #[error("evaluation set is empty")]
    EmptyTestset,
    /// A ranking was requested over the wrong number of candidates.
    #[error("expected {expected} candidates, got {got}")]
    CandidateCount { got: usize, expected: usize },
    /// An evaluation item does not carry the protocol's negative count.
    #[error("query {index} has {got} negatives, expected {expected}")]
    ItemShape {
        index: usize,
        got: usize,
        expected: usize,
    },
    /// The positive's index points outside the candidate list.
    #[error("positive index {positive} out of range for {len} candidates")]
    PositiveOutOfRange { positive: usize, len: usize },
    /// The fold count is incompatible with the dataset size.
    #[error("cannot split {n} items into {k} folds")]
    BadFoldCount { k: usize, n: usize },
    /// Encoding or scoring failed for one query of the evaluation set.
    #[error("query {index}: {source}")]
    Query {
        index: usize,
        #[source]
        source: CoreError,
    },
}
