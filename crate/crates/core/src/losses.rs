//! Training losses.
//!
//! Phase 1 combines per-modality InfoNCE terms with a self-distillation
//! term that pulls each modality's candidate distribution toward the
//! (detached) ensemble distribution. Phase 2 aligns a student's dense
//! embeddings with a frozen teacher via cosine, MSE, and batch
//! similarity-matrix terms.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::scoring::{EnsembleWeights, ScoreBreakdown};

/// Which score column drives a ranking or loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Dense,
    Sparse,
    Colbert,
    Ensemble,
}

impl Modality {
    /// All modalities, in reporting order.
    pub const ALL: [Modality; 4] = [
        Modality::Dense,
        Modality::Sparse,
        Modality::Colbert,
        Modality::Ensemble,
    ];

    /// Pick this modality's score out of a breakdown.
    pub fn select(&self, b: &ScoreBreakdown) -> f64 {
        match self {
            Modality::Dense => b.dense,
            Modality::Sparse => b.sparse,
            Modality::Colbert => b.colbert,
            Modality::Ensemble => b.ensemble,
        }
    }

    /// Stable lowercase name, matching the serialized form.
    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::Dense => "dense",
            Modality::Sparse => "sparse",
            Modality::Colbert => "colbert",
            Modality::Ensemble => "ensemble",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dense" => Ok(Modality::Dense),
            "sparse" => Ok(Modality::Sparse),
            "colbert" => Ok(Modality::Colbert),
            "ensemble" => Ok(Modality::Ensemble),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown modality `{other}` (expected dense|sparse|colbert|ensemble)"
            ))),
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hyper-parameters of the phase-1 objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Softmax temperature applied to every candidate distribution.
    pub temperature: f64,
    /// Label-smoothing mass spread uniformly over all candidates.
    pub label_smoothing: f64,
    /// Weight of the dense InfoNCE / distillation term.
    pub lambda1: f64,
    /// Weight of the sparse InfoNCE / distillation term.
    pub lambda2: f64,
    /// Weight of the late-interaction InfoNCE / distillation term.
    pub lambda3: f64,
    /// Mixing weights used to form the ensemble score.
    pub ensemble: EnsembleWeights,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.05,
            label_smoothing: 0.1,
            lambda1: 1.0,
            lambda2: 0.1,
            lambda3: 1.0,
            ensemble: EnsembleWeights::default(),
        }
    }
}

impl LossConfig {
    /// Reject non-positive temperatures and smoothing outside [0, 1).
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(CoreError::InvalidConfig(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(CoreError::InvalidConfig(format!(
                "label_smoothing must lie in [0, 1), got {}",
                self.label_smoothing
            )));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(CoreError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-modality score vectors for one query's candidate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScores {
    pub dense: Vec<f64>,
    pub sparse: Vec<f64>,
    pub colbert: Vec<f64>,
    pub ensemble: Vec<f64>,
    /// Index of the positive candidate in every score vector.
    pub positive: usize,
}

impl CandidateScores {
    /// Column-split a list of breakdowns; requires at least one negative.
    pub fn from_breakdowns(scores: &[ScoreBreakdown], positive: usize) -> Result<Self, CoreError> {
        if scores.len() < 2 {
            return Err(CoreError::InvalidConfig(format!(
                "need a positive and at least one negative, got {} candidates",
                scores.len()
            )));
        }
        if positive >= scores.len() {
            return Err(CoreError::InvalidConfig(format!(
                "positive index {} out of range for {} candidates",
                positive,
                scores.len()
            )));
        }
        Ok(Self {
            dense: scores.iter().map(|s| s.dense).collect(),
            sparse: scores.iter().map(|s| s.sparse).collect(),
            colbert: scores.iter().map(|s| s.colbert).collect(),
            ensemble: scores.iter().map(|s| s.ensemble).collect(),
            positive,
        })
    }

    /// Number of candidates.
    pub fn len(&self) -> usize {
        self.ensemble.len()
    }

    /// True when no candidates are present.
    pub fn is_empty(&self) -> bool {
        self.ensemble.is_empty()
    }

    fn of(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Dense => &self.dense,
            Modality::Sparse => &self.sparse,
            Modality::Colbert => &self.colbert,
            Modality::Ensemble => &self.ensemble,
        }
    }
}

/// Floor applied to log-probabilities inside the distillation cross-entropy.
pub fn log_floor() -> f64 {
    1e-12f64.ln()
}

/// Temperature softmax with the usual max-subtraction for stability.
pub fn softmax_dist(scores: &[f64], tau: f64) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Log of [`softmax_dist`], computed without an intermediate exponential
/// round-trip so that very small probabilities keep accurate logs.
pub fn log_softmax_dist(scores: &[f64], tau: f64) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| ((s - max) / tau).exp()).sum();
    let log_z = z.ln();
    scores.iter().map(|s| (s - max) / tau - log_z).collect()
}

/// Smoothed one-hot target: the positive keeps `1 - eps + eps/C` and every
/// candidate (positive included) shares the remaining `eps` uniformly.
pub fn smoothed_targets(len: usize, positive: usize, eps: f64) -> Vec<f64> {
    let uniform = eps / len as f64;
    let mut t = vec![uniform; len];
    t[positive] += 1.0 - eps;
    t
}

/// InfoNCE with label smoothing: cross-entropy between the smoothed target
/// and the temperature softmax over candidate scores.
///
/// Panics if `scores` is empty or `positive` is out of range; validate
/// configuration with [`LossConfig::validate`] before training.
pub fn info_nce(scores: &[f64], positive: usize, tau: f64, eps: f64) -> f64 {
    assert!(!scores.is_empty(), "info_nce on empty score list");
    assert!(positive < scores.len(), "positive index out of range");
    let log_p = log_softmax_dist(scores, tau);
    let targets = smoothed_targets(scores.len(), positive, eps);
    -targets
        .iter()
        .zip(log_p.iter())
        .map(|(t, lp)| t * lp)
        .sum::<f64>()
}

/// Per-modality InfoNCE values and their weighted combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimaryLossReport {
    pub dense: f64,
    pub sparse: f64,
    pub colbert: f64,
    pub ensemble: f64,
    pub total: f64,
}

/// The contrastive part of the phase-1 objective:
/// `(λ1·L_dense + λ2·L_sparse + λ3·L_colbert + L_ensemble) / 4`.
pub fn primary_loss(scores: &CandidateScores, cfg: &LossConfig) -> PrimaryLossReport {
    let tau = cfg.temperature;
    let eps = cfg.label_smoothing;
    let dense = info_nce(&scores.dense, scores.positive, tau, eps);
    let sparse = info_nce(&scores.sparse, scores.positive, tau, eps);
    let colbert = info_nce(&scores.colbert, scores.positive, tau, eps);
    let ensemble = info_nce(&scores.ensemble, scores.positive, tau, eps);
    let total =
        (cfg.lambda1 * dense + cfg.lambda2 * sparse + cfg.lambda3 * colbert + ensemble) / 4.0;
    PrimaryLossReport {
        dense,
        sparse,
        colbert,
        ensemble,
        total,
    }
}

/// Per-modality self-distillation cross-entropies and their combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfDistillReport {
    pub dense: f64,
    pub sparse: f64,
    pub colbert: f64,
    pub total: f64,
    /// True when any student log-probability hit the clamp floor.
    pub clamped: bool,
}

/// Cross-entropy from the detached ensemble distribution to each modality's
/// distribution: `(λ1·L'_dense + λ2·L'_sparse + λ3·L'_colbert) / 3`.
///
/// Student log-probabilities are clamped below at `ln(1e-12)`; the report
/// flags whether the clamp engaged.
pub fn self_distill_loss(scores: &CandidateScores, cfg: &LossConfig) -> SelfDistillReport {
    let target = softmax_dist(&scores.ensemble, cfg.temperature);
    self_distill_loss_with_target(scores, cfg, &target)
}

/// [`self_distill_loss`] against an explicitly supplied target distribution.
///
/// The target is treated as a constant, which makes this the right value
/// function for finite-difference probes of the stop-gradient objective.
pub fn self_distill_loss_with_target(
    scores: &CandidateScores,
    cfg: &LossConfig,
    target: &[f64],
) -> SelfDistillReport {
    let tau = cfg.temperature;
    let floor = log_floor();
    let mut clamped = false;
    let mut cross_entropy = |m: Modality| -> f64 {
        let log_p = log_softmax_dist(scores.of(m), tau);
        -target
            .iter()
            .zip(log_p.iter())
            .map(|(t, lp)| {
                let lp = if *lp < floor {
                    clamped = true;
                    floor
                } else {
                    *lp
                };
                t * lp
            })
            .sum::<f64>()
    };
    let dense = cross_entropy(Modality::Dense);
    let sparse = cross_entropy(Modality::Sparse);
    let colbert = cross_entropy(Modality::Colbert);
    let total = (cfg.lambda1 * dense + cfg.lambda2 * sparse + cfg.lambda3 * colbert) / 3.0;
    SelfDistillReport {
        dense,
        sparse,
        colbert,
        total,
        clamped,
    }
}

/// Full phase-1 loss for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase1LossReport {
    pub primary: PrimaryLossReport,
    pub distill: SelfDistillReport,
    /// `(primary.total + distill.total) / 2`.
    pub total: f64,
}

/// Combine the contrastive and self-distillation halves of phase 1.
pub fn final_loss(scores: &CandidateScores, cfg: &LossConfig) -> Phase1LossReport {
    let primary = primary_loss(scores, cfg);
    let distill = self_distill_loss(scores, cfg);
    Phase1LossReport {
        primary,
        distill,
        total: (primary.total + distill.total) / 2.0,
    }
}

/// Weights of the phase-2 teacher-distillation terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phase2Config {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for Phase2Config {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 1.0,
        }
    }
}

/// Phase-2 loss components for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase2LossReport {
    pub cosine: f64,
    pub mse: f64,
    pub similarity: f64,
    pub total: f64,
}

/// `1 - cos(a, b)`; errors on zero-norm inputs.
pub fn cosine_distance(a: &Array1<f64>, b: &Array1<f64>) -> Result<f64, CoreError> {
    if a.len() != b.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "cosine arguments of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(CoreError::ZeroVector("cosine distance"));
    }
    // Bitwise-equal inputs are at the exact minimum; the general formula
    // rounds `a·a / (√(a·a))²` to 1 ± ε and would report a spurious ±ε
    // distance for a distilled student that has converged onto its teacher.
    if a == b {
        return Ok(0.0);
    }
    Ok(1.0 - a.dot(b) / (na * nb))
}

/// Squared Euclidean distance `‖a - b‖²`.
pub fn mse_loss(a: &Array1<f64>, b: &Array1<f64>) -> Result<f64, CoreError> {
    if a.len() != b.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "mse arguments of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `‖S·Sᵀ - T·Tᵀ‖_F² / B²` for row-stacked batch embeddings `S`, `T`.
pub fn similarity_matrix_loss(s: &Array2<f64>, t: &Array2<f64>) -> Result<f64, CoreError> {
    if s.nrows() != t.nrows() || s.ncols() != t.ncols() {
        return Err(CoreError::DimensionMismatch(format!(
            "similarity batches of shapes {:?} and {:?}",
            s.shape(),
            t.shape()
        )));
    }
    let b = s.nrows();
    if b == 0 {
        return Err(CoreError::EmptyInput("similarity loss on empty batch".into()));
    }
    let gram_s = s.dot(&s.t());
    let gram_t = t.dot(&t.t());
    let diff = &gram_s - &gram_t;
    let frob_sq: f64 = diff.iter().map(|v| v * v).sum();
    Ok(frob_sq / (b * b) as f64)
}

/// Weighted sum of the three phase-2 terms.
pub fn distill_total(cosine: f64, mse: f64, similarity: f64, cfg: &Phase2Config) -> f64 {
    cfg.alpha1 * cosine + cfg.alpha2 * mse + cfg.alpha3 * similarity
}
