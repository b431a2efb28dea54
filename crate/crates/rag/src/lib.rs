//! Clinical-note retrieval pipeline.
//!
//! Category-tagged progress notes are recursively split under a token cap,
//! embedded densely, and indexed per patient; queries retrieve top-k chunks
//! from their patient's index and are scored by the Jaccard overlap (IoU)
//! between the retrieved categories and a gold category set.

pub mod category;
pub mod chunk;
pub mod error;
pub mod pipeline;

pub use category::ClinicalCategory;
pub use chunk::{split_text, Chunk, DEFAULT_MAX_TOKENS};
pub use error::RagError;
pub use pipeline::{
    category_iou, ingest_notes, rag_evaluate, rag_evaluate_with, rag_query, rag_query_with,
    ChunkStore, IngestConfig, NoteRecord, PatientStore, QueryOutcome, RagQuery, RagReport,
    Retrieval, RetrievedChunk, DEFAULT_K, RERANK_POOL_FACTOR,
};
