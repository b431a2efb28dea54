//! Error type for the training harness.

use thiserror::Error;
use treble_core::CoreError;
use treble_eval::EvalError;

/// Everything that can abort a training run.
#[derive(Debug, Error)]
pub enum TrainError {
    /// A configuration field violates its invariant.
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    /// The training set has no examples.
    #[error("training dataset is empty")]
    EmptyDataset,
    /// A triplet violates the dataset contract.
    #[error("triplet {index}: {reason}")]
    BadTriplet { index: usize, reason: String },
    /// The loss left the reals; the run aborts with the offending step.
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    /// A gradient tensor left the reals; the run aborts with the step.
    #[error("non-finite gradient at step {step}: {detail}")]
    NonFiniteGradient { step: usize, detail: String },
    /// Encoding or scoring failed inside the loop.
    #[error(transparent)]
    Core(#[from] CoreError),
    /// Validation-set evaluation failed.
    #[error("validation: {0}")]
    Eval(#[from] EvalError),
    /// Checkpoint file I/O failed.
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}
