//! Error type for the note-retrieval pipeline.

use thiserror::Error;
use treble_core::CoreError;
use treble_index::IndexError;

/// Failures raised while ingesting notes, querying a store, or scoring
/// retrieval against gold categories.
#[derive(Debug, Error)]
pub enum RagError {
    /// A required text field was empty or blank.
    #[error("empty {what}")]
    EmptyField { what: &'static str },

    /// A category label outside the fixed clinical set.
    #[error("unknown clinical category {0:?}")]
    UnknownCategory(String),

    /// A query's gold category set was empty.
    #[error("gold category set is empty")]
    EmptyGold,

    /// A query named a patient with no ingested notes.
    #[error("unknown patient {0:?}")]
    UnknownPatient(String),

    /// An evaluation was requested over zero queries.
    #[error("empty query set")]
    EmptyQuerySet,

    /// The chunk cap cannot fit in the encoder's sequence budget.
    #[error("invalid ingest config: {0}")]
    InvalidConfig(String),

    /// The encoder rejected one chunk; the id pins down which.
    #[error("encoding chunk {id}")]
    ChunkEncode {
        id: String,
        #[source]
        source: CoreError,
    },

    /// The encoder rejected the query text.
    #[error(transparent)]
    Encode(#[from] CoreError),

    /// Index construction or search failure.
    #[error(transparent)]
    Index(#[from] IndexError),

    /// Failure while evaluating the query at `index`.
    #[error("query {index}")]
    Query {
        index: usize,
        #[source]
        source: Box<RagError>,
    },
}
