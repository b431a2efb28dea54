//! Approximate nearest-neighbour retrieval over dense embeddings.

pub mod error;
pub mod exact;
pub mod hnsw;

pub use error::IndexError;
pub use exact::exact_search;
pub use hnsw::{HnswConfig, HnswIndex, Neighbor};
