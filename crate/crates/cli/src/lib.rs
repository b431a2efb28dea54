//! Command-line front end for the treble workspace.
//!
//! The `treble` binary wires the encoder, training harness, evaluation
//! protocol, vector index, and note-retrieval pipeline into a small set of
//! file-based subcommands. Everything lives behind a library interface so
//! integration tests can drive the same code paths the binary does.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod synth;

pub use config::{CliConfig, RagSection, VALIDATION_FRACTION};
pub use dataset::{render_kg, DatasetRecord, TextLine};
pub use error::CliError;
pub use synth::{gen_synthetic, GeneratedCorpus, SyntheticSpec};
