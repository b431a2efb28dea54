//! Relevance scores over tri-modal representations.
//!
//! Dense: dot product of the two unit CLS vectors. Sparse: sum of products
//! of learned weights over shared token strings. ColBERT-style: mean over
//! query tokens of the max similarity to any passage token. Ensemble: a
//! weighted sum of the three.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encoder::MultiRepresentation;
use crate::error::CoreError;

/// Mixing weights of the ensemble score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for EnsembleWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 0.3,
            w3: 1.0,
        }
    }
}

/// All four scores for one query-candidate pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub dense: f64,
    pub sparse: f64,
    pub colbert: f64,
    pub ensemble: f64,
}

/// Dot product of the two unit dense vectors.
pub fn dense_score(q: &MultiRepresentation, p: &MultiRepresentation) -> Result<f64, CoreError> {
    if q.dense.len() != p.dense.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "dense dims {} vs {}",
            q.dense.len(),
            p.dense.len()
        )));
    }
    Ok(q.dense.dot(&p.dense))
}

/// Collapse duplicate token strings to their maximum weight, remembering the
/// token position that attained it. Sorted map keeps summation order fixed.
pub(crate) fn max_weight_by_token(r: &MultiRepresentation) -> BTreeMap<&str, (usize, f64)> {
    let mut map: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for (i, tok) in r.tokens.iter().enumerate() {
        let w = r.lexical_weights[i];
        match map.get(tok.as_str()) {
            Some(&(_, best)) if best >= w => {}
            _ => {
                map.insert(tok, (i, w));
            }
        }
    }
    map
}

/// One shared token term of the sparse score, with the positions whose
/// (maximum) weights produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOverlapTerm {
    pub token: String,
    pub q_index: usize,
    pub p_index: usize,
    pub q_weight: f64,
    pub p_weight: f64,
}

/// The shared-token terms behind [`sparse_score`], for gradient routing.
pub fn sparse_overlap_terms(
    q: &MultiRepresentation,
    p: &MultiRepresentation,
) -> Vec<SparseOverlapTerm> {
    let qmap = max_weight_by_token(q);
    let pmap = max_weight_by_token(p);
    let mut terms = Vec::new();
    for (tok, &(qi, qw)) in &qmap {
        if let Some(&(pi, pw)) = pmap.get(tok) {
            terms.push(SparseOverlapTerm {
                token: (*tok).to_string(),
                q_index: qi,
                p_index: pi,
                q_weight: qw,
                p_weight: pw,
            });
        }
    }
    terms
}

/// Sum over shared token strings of the products of their lexical weights.
/// Duplicate occurrences collapse to the maximum weight on each side.
pub fn sparse_score(q: &MultiRepresentation, p: &MultiRepresentation) -> f64 {
    sparse_overlap_terms(q, p)
        .iter()
        .map(|t| t.q_weight * t.p_weight)
        .sum()
}

/// For every query token, the passage token index attaining the max inner
/// product (first index on ties).
pub fn colbert_argmax(
    q: &MultiRepresentation,
    p: &MultiRepresentation,
) -> Result<Vec<usize>, CoreError> {
    let n = q.multi_vectors.nrows();
    let m = p.multi_vectors.nrows();
    if n == 0 || m == 0 {
        return Err(CoreError::EmptyInput(
            "late-interaction score undefined for zero-token text".into(),
        ));
    }
    if q.multi_vectors.ncols() != p.multi_vectors.ncols() {
        return Err(CoreError::DimensionMismatch(format!(
            "multi-vector dims {} vs {}",
            q.multi_vectors.ncols(),
            p.multi_vectors.ncols()
        )));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let qi = q.multi_vectors.row(i);
        let mut best = f64::NEG_INFINITY;
        let mut best_j = 0;
        for j in 0..m {
            let sim = qi.dot(&p.multi_vectors.row(j));
            if sim > best {
                best = sim;
                best_j = j;
            }
        }
        out.push(best_j);
    }
    Ok(out)
}

/// Late-interaction score: mean over query tokens of the maximum similarity
/// to any passage token. Errors on zero-token inputs (the mean is undefined).
pub fn colbert_score(q: &MultiRepresentation, p: &MultiRepresentation) -> Result<f64, CoreError> {
    let argmax = colbert_argmax(q, p)?;
    let n = argmax.len();
    let total: f64 = argmax
        .iter()
        .enumerate()
        .map(|(i, &j)| q.multi_vectors.row(i).dot(&p.multi_vectors.row(j)))
        .sum();
    Ok(total / n as f64)
}

/// Weighted sum of the three modality scores.
pub fn ensemble_score(dense: f64, sparse: f64, colbert: f64, w: &EnsembleWeights) -> f64 {
    w.w1 * dense + w.w2 * sparse + w.w3 * colbert
}

/// Score one pair on all modalities.
pub fn score_pair(
    q: &MultiRepresentation,
    p: &MultiRepresentation,
    w: &EnsembleWeights,
) -> Result<ScoreBreakdown, CoreError> {
    let dense = dense_score(q, p)?;
    let sparse = sparse_score(q, p);
    let colbert = colbert_score(q, p)?;
    Ok(ScoreBreakdown {
        dense,
        sparse,
        colbert,
        ensemble: ensemble_score(dense, sparse, colbert, w),
    })
}

/// Score every candidate against the query, preserving order.
pub fn score_candidates(
    q: &MultiRepresentation,
    candidates: &[MultiRepresentation],
    w: &EnsembleWeights,
) -> Result<Vec<ScoreBreakdown>, CoreError> {
    if candidates.is_empty() {
        return Err(CoreError::EmptyCandidates);
    }
    candidates.iter().map(|p| score_pair(q, p, w)).collect()
}
