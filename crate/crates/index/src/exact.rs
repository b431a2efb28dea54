//! Brute-force oracle over the same stored vectors as the graph index.

use crate::error::IndexError;
use crate::hnsw::{HnswIndex, Neighbor};

/// Exhaustive top-`k` by inner product, ties broken by ascending id.
///
/// Scans every stored vector; the result is exact by construction and
/// serves as the recall oracle for [`HnswIndex::search`].
pub fn exact_search(
    index: &HnswIndex,
    query: &[f32],
    k: usize,
) -> Result<Vec<Neighbor>, IndexError> {
    if query.len() != index.dim() {
        return Err(IndexError::DimensionMismatch {
            expected: index.dim(),
            got: query.len(),
        });
    }
    if query.iter().any(|x| !x.is_finite()) {
        return Err(IndexError::NonFinite("query vector"));
    }
    let mut hits: Vec<Neighbor> = index
        .ids()
        .iter()
        .map(|&id| {
            let v = index.get(id).expect("stored id");
            let score = v.iter().zip(query).map(|(a, b)| a * b).sum();
            Neighbor { id, score }
        })
        .collect();
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then(a.id.cmp(&b.id))
    });
    hits.truncate(k);
    Ok(hits)
}
