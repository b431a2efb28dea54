//! Tri-modal text embedding core.
//!
//! A small trainable transformer encoder that maps any text to three
//! representation modalities — a dense unit vector, per-token lexical
//! weights, and per-token unit multi-vectors — together with the scoring
//! functions and training losses built on top of them.
//!
//! Everything on the training path runs in 64-bit floats with exact,
//! finite-difference-verified gradients ([`gradcheck`]).

pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod objective;
pub mod scoring;
pub mod vocab;

pub use encoder::{EncoderConfig, EncoderParams, GradientSet, MultiRepresentation};
pub use error::CoreError;
pub use losses::{CandidateScores, LossConfig, Modality};
pub use scoring::{EnsembleWeights, ScoreBreakdown};
pub use vocab::{TokenSeq, Vocab};
