//! TOML run configuration.
//!
//! Section and key names mirror the library configuration structs
//! verbatim: `[encoder]` (EncoderConfig), `[train]` (TrainConfig, with
//! nested `[train.schedule]`, `[train.loss]`, `[train.weights]`),
//! `[distill]` (Phase2TrainConfig), `[index]` (the graph parameters),
//! `[rag]` (IngestConfig), and `[synthetic]` (SyntheticSpec). Every key is
//! optional; omitted keys take the documented defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use treble_core::EncoderConfig;
use treble_index::HnswConfig;
use treble_rag::IngestConfig;
use treble_train::{Phase2TrainConfig, TrainConfig};

use crate::error::CliError;
use crate::synth::SyntheticSpec;

/// Fraction of the training file held out for validation-driven early
/// stopping and best-model selection.
pub const VALIDATION_FRACTION: f64 = 0.1;

/// Full run configuration; all sections optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub distill: Phase2TrainConfig,
    pub index: HnswConfig,
    pub rag: RagSection,
    pub synthetic: SyntheticSpec,
}

/// `[rag]` section: ingestion parameters plus the retrieval depth.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RagSection {
    /// Token cap per chunk. The desk-scale default (100) fits the default
    /// encoder budget; full-scale runs raise it.
    pub max_tokens: usize,
    /// Graph parameters for the per-patient indices.
    pub hnsw: HnswConfig,
    /// Chunks retrieved per query when `--k` is not given.
    pub k: usize,
}

impl Default for RagSection {
    fn default() -> Self {
        Self {
            max_tokens: 100,
            hnsw: HnswConfig::default(),
            k: treble_rag::DEFAULT_K,
        }
    }
}

impl RagSection {
    pub fn ingest(&self) -> IngestConfig {
        IngestConfig {
            max_tokens: self.max_tokens,
            hnsw: self.hnsw,
        }
    }
}

impl CliConfig {
    /// Load a TOML config, or defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::at(path, e))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}
