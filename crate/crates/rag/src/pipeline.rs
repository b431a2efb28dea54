//! Ingestion, per-patient indexing, retrieval, and category-IoU scoring.
//!
//! Notes arrive pre-sectioned by clinical category. Each section is split
//! under a token cap, every chunk is embedded densely, and one vector index
//! is built per patient — queries are always evaluated over a single
//! patient's record. Retrieval quality is scored by comparing the set of
//! categories among the top-k chunks against a gold category set.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use treble_core::encoder::encode;
use treble_core::scoring::score_pair;
use treble_core::vocab::tokenize;
use treble_core::{EncoderParams, EnsembleWeights, Modality, Vocab};
use treble_index::{HnswConfig, HnswIndex};

use crate::category::ClinicalCategory;
use crate::chunk::{split_text, Chunk, DEFAULT_MAX_TOKENS};
use crate::error::RagError;

/// Default number of chunks retrieved per query.
pub const DEFAULT_K: usize = 5;

/// How many dense candidates to fetch per requested hit when a re-ranking
/// modality is active (see [`rag_query_with`]).
pub const RERANK_POOL_FACTOR: usize = 4;

/// One category section of one patient's progress notes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteRecord {
    pub patient_id: String,
    pub category: ClinicalCategory,
    pub text: String,
}

impl NoteRecord {
    /// Reject blank patient ids and blank text.
    pub fn validate(&self) -> Result<(), RagError> {
        if self.patient_id.trim().is_empty() {
            return Err(RagError::EmptyField { what: "patient id" });
        }
        if self.text.trim().is_empty() {
            return Err(RagError::EmptyField { what: "note text" });
        }
        Ok(())
    }
}

/// A question over one patient's record, annotated with the gold set of
/// categories that contain the answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagQuery {
    pub query: String,
    pub patient_id: String,
    /// Gold answer categories; serialized as `gold_categories` in query
    /// files.
    #[serde(rename = "gold_categories")]
    pub gold: BTreeSet<ClinicalCategory>,
}

impl RagQuery {
    /// Reject blank fields and an empty gold set.
    pub fn validate(&self) -> Result<(), RagError> {
        if self.query.trim().is_empty() {
            return Err(RagError::EmptyField { what: "query text" });
        }
        if self.patient_id.trim().is_empty() {
            return Err(RagError::EmptyField { what: "patient id" });
        }
        if self.gold.is_empty() {
            return Err(RagError::EmptyGold);
        }
        Ok(())
    }
}

/// Chunking and indexing parameters for ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Token cap per chunk. Must leave room for the CLS slot in the
    /// encoder's sequence budget (`max_tokens + 1 ≤ max_seq_len`).
    pub max_tokens: usize,
    /// Graph parameters shared by every patient's index.
    pub hnsw: HnswConfig,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            max_tokens: DEFAULT_MAX_TOKENS,
            hnsw: HnswConfig::default(),
        }
    }
}

/// One patient's chunks and the index built over them. Chunk `i` is stored
/// in the index under id `i`.
#[derive(Debug, Clone)]
pub struct PatientStore {
    chunks: Vec<Chunk>,
    index: HnswIndex,
}

impl PatientStore {
    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn index(&self) -> &HnswIndex {
        &self.index
    }
}

/// All ingested patients, each with an independent index.
#[derive(Debug, Clone)]
pub struct ChunkStore {
    patients: BTreeMap<String, PatientStore>,
}

impl ChunkStore {
    /// Patient ids in sorted order.
    pub fn patient_ids(&self) -> impl Iterator<Item = &str> {
        self.patients.keys().map(String::as_str)
    }

    pub fn patient(&self, patient_id: &str) -> Option<&PatientStore> {
        self.patients.get(patient_id)
    }

    /// Total chunks across all patients.
    pub fn chunk_count(&self) -> usize {
        self.patients.values().map(|p| p.chunks.len()).sum()
    }
}

/// Split, embed, and index `records`, one index per patient.
///
/// Chunk ids are sequential per patient and category, in record order;
/// re-ingesting identical input reproduces the store exactly.
pub fn ingest_notes(
    records: &[NoteRecord],
    params: &EncoderParams,
    vocab: &Vocab,
    cfg: &IngestConfig,
) -> Result<ChunkStore, RagError> {
    if cfg.max_tokens == 0 {
        return Err(RagError::InvalidConfig("max_tokens must be at least 1".into()));
    }
    if cfg.max_tokens + 1 > params.config.max_seq_len {
        return Err(RagError::InvalidConfig(format!(
            "chunk cap {} plus the CLS slot exceeds the encoder budget of {}",
            cfg.max_tokens, params.config.max_seq_len
        )));
    }
    for record in records {
        record.validate()?;
    }

    let mut chunks_by_patient: BTreeMap<String, Vec<Chunk>> = BTreeMap::new();
    let mut next_seq: BTreeMap<(String, ClinicalCategory), usize> = BTreeMap::new();
    for record in records {
        for text in split_text(&record.text, cfg.max_tokens) {
            let seq_no = next_seq
                .entry((record.patient_id.clone(), record.category))
                .or_insert(0);
            let chunk_id = format!("{}_{}_chunk{}", record.patient_id, record.category, *seq_no);
            let repr = encode(params, &tokenize(&text, vocab))
                .map_err(|source| RagError::ChunkEncode { id: chunk_id, source })?;
            let token_count = repr.token_count();
            chunks_by_patient
                .entry(record.patient_id.clone())
                .or_default()
                .push(Chunk {
                    patient_id: record.patient_id.clone(),
                    category: record.category,
                    seq: *seq_no,
                    text,
                    token_count,
                    embedding: repr.dense.iter().map(|&v| v as f32).collect(),
                });
            *seq_no += 1;
        }
    }

    let mut patients = BTreeMap::new();
    for (patient_id, chunks) in chunks_by_patient {
        let index = HnswIndex::build(
            params.config.dim,
            cfg.hnsw,
            chunks
                .iter()
                .enumerate()
                .map(|(i, c)| (i as u32, c.embedding.clone())),
        )?;
        patients.insert(patient_id, PatientStore { chunks, index });
    }
    Ok(ChunkStore { patients })
}

/// One retrieved chunk, in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub id: String,
    pub category: ClinicalCategory,
    pub score: f64,
}

/// Top-k retrieval result: ranked hits and the set of categories they span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub hits: Vec<RetrievedChunk>,
    pub categories: BTreeSet<ClinicalCategory>,
}

/// Retrieve the top-`k` chunks for `query` from its patient's index by
/// dense cosine similarity.
///
/// # Panics
/// If `k` is zero.
pub fn rag_query(
    store: &ChunkStore,
    params: &EncoderParams,
    vocab: &Vocab,
    query: &RagQuery,
    k: usize,
) -> Result<Retrieval, RagError> {
    rag_query_with(store, params, vocab, query, k, None)
}

/// [`rag_query`] with an optional re-ranking stage.
///
/// The base protocol embeds one dense vector per chunk and retrieves by
/// cosine alone. As an extension beyond that protocol, a `rerank` modality
/// widens the dense candidate pool by [`RERANK_POOL_FACTOR`] and re-orders
/// it by the selected score (sparse, late-interaction, or the ensemble at
/// its standard weights) before truncating to `k`.
pub fn rag_query_with(
    store: &ChunkStore,
    params: &EncoderParams,
    vocab: &Vocab,
    query: &RagQuery,
    k: usize,
    rerank: Option<Modality>,
) -> Result<Retrieval, RagError> {
    assert!(k >= 1, "k must be at least 1");
    query.validate()?;
    let patient = store
        .patient(&query.patient_id)
        .ok_or_else(|| RagError::UnknownPatient(query.patient_id.clone()))?;
    let q_repr = encode(params, &tokenize(&query.query, vocab))?;
    let q_dense: Vec<f32> = q_repr.dense.iter().map(|&v| v as f32).collect();

    let pool = match rerank {
        None => k,
        Some(_) => (k * RERANK_POOL_FACTOR).min(patient.chunks.len()),
    };
    let neighbors = patient.index.search(&q_dense, pool)?;
    let mut ranked: Vec<(&Chunk, f64)> = neighbors
        .iter()
        .map(|n| (&patient.chunks[n.id as usize], f64::from(n.score)))
        .collect();

    if let Some(modality) = rerank {
        let weights = EnsembleWeights::default();
        let mut rescored = Vec::with_capacity(ranked.len());
        for (chunk, _) in ranked {
            let p_repr = encode(params, &tokenize(&chunk.text, vocab)).map_err(|source| {
                RagError::ChunkEncode { id: chunk.id(), source }
            })?;
            let breakdown = score_pair(&q_repr, &p_repr, &weights)?;
            rescored.push((chunk, modality.select(&breakdown)));
        }
        // Stable sort keeps the dense order for tied re-scores.
        rescored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("scores are finite"));
        rescored.truncate(k);
        ranked = rescored;
    }

    let hits: Vec<RetrievedChunk> = ranked
        .iter()
        .map(|(chunk, score)| RetrievedChunk {
            id: chunk.id(),
            category: chunk.category,
            score: *score,
        })
        .collect();
    let categories = ranked.iter().map(|(chunk, _)| chunk.category).collect();
    Ok(Retrieval { hits, categories })
}

/// Jaccard overlap `|G ∩ R| / |G ∪ R|` between the gold and retrieved
/// category sets.
///
/// # Panics
/// If the gold set is empty.
pub fn category_iou(
    gold: &BTreeSet<ClinicalCategory>,
    retrieved: &BTreeSet<ClinicalCategory>,
) -> f64 {
    assert!(!gold.is_empty(), "gold category set must be non-empty");
    let intersection = gold.intersection(retrieved).count();
    let union = gold.union(retrieved).count();
    intersection as f64 / union as f64
}

/// One query's outcome in an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query: String,
    pub patient_id: String,
    pub gold: BTreeSet<ClinicalCategory>,
    pub retrieved: BTreeSet<ClinicalCategory>,
    pub iou: f64,
}

/// Per-query IoU breakdown and the mean over all queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagReport {
    pub k: usize,
    pub mean_iou: f64,
    pub per_query: Vec<QueryOutcome>,
}

impl fmt::Display for RagReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "mean IoU {:.4} over {} queries (k={})",
            self.mean_iou,
            self.per_query.len(),
            self.k
        )?;
        for (i, q) in self.per_query.iter().enumerate() {
            let gold: Vec<&str> = q.gold.iter().map(|c| c.as_str()).collect();
            let retrieved: Vec<&str> = q.retrieved.iter().map(|c| c.as_str()).collect();
            writeln!(
                f,
                "  #{i:03} {} iou {:.3} gold [{}] retrieved [{}]",
                q.patient_id,
                q.iou,
                gold.join(" "),
                retrieved.join(" ")
            )?;
        }
        Ok(())
    }
}

/// Run every query through [`rag_query`] and average the per-query IoU.
pub fn rag_evaluate(
    store: &ChunkStore,
    params: &EncoderParams,
    vocab: &Vocab,
    queries: &[RagQuery],
    k: usize,
) -> Result<RagReport, RagError> {
    rag_evaluate_with(store, params, vocab, queries, k, None)
}

/// [`rag_evaluate`] with the optional re-ranking extension of
/// [`rag_query_with`].
pub fn rag_evaluate_with(
    store: &ChunkStore,
    params: &EncoderParams,
    vocab: &Vocab,
    queries: &[RagQuery],
    k: usize,
    rerank: Option<Modality>,
) -> Result<RagReport, RagError> {
    if queries.is_empty() {
        return Err(RagError::EmptyQuerySet);
    }
    let mut per_query = Vec::with_capacity(queries.len());
    for (index, query) in queries.iter().enumerate() {
        let retrieval = rag_query_with(store, params, vocab, query, k, rerank)
            .map_err(|source| RagError::Query { index, source: Box::new(source) })?;
        let iou = category_iou(&query.gold, &retrieval.categories);
        per_query.push(QueryOutcome {
            query: query.query.clone(),
            patient_id: query.patient_id.clone(),
            gold: query.gold.clone(),
            retrieved: retrieval.categories,
            iou,
        });
    }
    let mean_iou = per_query.iter().map(|q| q.iou).sum::<f64>() / per_query.len() as f64;
    Ok(RagReport { k, mean_iou, per_query })
}
