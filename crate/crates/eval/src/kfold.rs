//! Seeded stratified k-fold splitting.
//!
//! Items are grouped by stratum label, shuffled within each group, and dealt
//! round-robin across folds, so per-stratum counts never differ by more than
//! one between folds. A rotating starting fold spreads the remainders evenly.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::EvalError;

/// Label reported for items without a stratum in [`KfoldSplit::degraded`].
pub const UNLABELED: &str = "(unlabeled)";

/// The outcome of a stratified split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KfoldSplit {
    /// `k` disjoint index lists covering the input exactly; each sorted ascending.
    pub folds: Vec<Vec<usize>>,
    /// Strata with fewer members than folds; these cannot reach every fold,
    /// so strict stratification degrades gracefully for them.
    pub degraded: Vec<String>,
}

/// Split item indices into `k` stratified folds, deterministically by seed.
///
/// `strata[i]` is the stratum label of item `i` (`None` groups all unlabeled
/// items together). Requires `2 ≤ k ≤ strata.len()`.
pub fn stratified_kfold(
    strata: &[Option<String>],
    k: usize,
    seed: u64,
) -> Result<KfoldSplit, EvalError> {
    let n = strata.len();
    if k < 2 || k > n {
        return Err(EvalError::BadFoldCount { k, n });
    }
    let mut groups: BTreeMap<Option<&str>, Vec<usize>> = BTreeMap::new();
    for (i, label) in strata.iter().enumerate() {
        groups.entry(label.as_deref()).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut degraded = Vec::new();
    let mut start = 0usize;
    for (label, mut members) in groups {
        members.shuffle(&mut rng);
        if members.len() < k {
            degraded.push(label.unwrap_or(UNLABELED).to_string());
        }
        for (j, &idx) in members.iter().enumerate() {
            folds[(start + j) % k].push(idx);
        }
        start = (start + members.len()) % k;
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(KfoldSplit { folds, degraded })
}
