//! Two-phase training harness for the tri-modal encoder.
//!
//! Phase 1 runs the contrastive + self-distillation objective over
//! (query, positive, negatives) triplets with length-aware batching,
//! cosine warm-restart scheduling, global-norm clipping, early stopping,
//! and periodic checkpointing. Phase 2 distills the dense head toward a
//! frozen teacher over curriculum-ordered texts. Both phases are
//! deterministic given (config, seed, data).

pub mod batching;
pub mod error;
pub mod log;
pub mod phase1;
pub mod phase2;
pub mod schedule;

pub use batching::{curriculum_order, make_batches, DistillText, TextKind};
pub use error::TrainError;
pub use log::{EvalRecord, StepLoss, StepRecord, TrainLog};
pub use phase1::{
    train_phase1, Dataset, TrainConfig, TrainOutcome, TripletExample, NEGATIVES,
};
pub use phase2::{train_phase2, Phase2Outcome, Phase2TrainConfig};
pub use schedule::{clip_gradients, cosine_restart_lr, ClipReport, Schedule};
