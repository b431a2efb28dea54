//! Length-aware batching and the phase-2 curriculum ordering.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use treble_core::vocab::count_tokens;

use crate::error::TrainError;

/// What a phase-2 distillation text is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextKind {
    /// A straightforward term definition.
    Definition,
    /// A relational statement rendered from the knowledge graph.
    KgStatement,
}

/// One phase-2 training text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillText {
    /// The text itself.
    pub text: String,
    /// Definition or knowledge-graph statement.
    pub kind: TextKind,
}

impl DistillText {
    /// Curriculum complexity key: the token count of the text.
    pub fn complexity(&self) -> usize {
        count_tokens(&self.text)
    }
}

/// Stable curriculum permutation over `texts`: ascending complexity, with
/// definitions before knowledge-graph statements at equal complexity.
pub fn curriculum_order(texts: &[DistillText]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..texts.len()).collect();
    // Stable sort: ties beyond (complexity, kind) keep input order.
    order.sort_by_key(|&i| {
        (
            texts[i].complexity(),
            matches!(texts[i].kind, TextKind::KgStatement) as u8,
        )
    });
    order
}

/// Deterministic length-aware batching.
///
/// Indices are sorted by `lengths`, split into `buckets` contiguous buckets,
/// shuffled within each bucket, cut into consecutive batches of `batch_size`
/// (the final batch may be shorter), and the batch order is then shuffled.
/// Every index appears in exactly one batch.
pub fn make_batches(
    lengths: &[usize],
    batch_size: usize,
    buckets: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, TrainError> {
    if lengths.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch size must be >= 1".into()));
    }
    if buckets == 0 {
        return Err(TrainError::InvalidConfig("bucket count must be >= 1".into()));
    }
    let n = lengths.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (lengths[i], i));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bucket_len = n.div_ceil(buckets.min(n));
    for bucket in order.chunks_mut(bucket_len) {
        bucket.shuffle(&mut rng);
    }
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(&mut rng);
    Ok(batches)
}
