//! End-to-end differentiable objectives.
//!
//! Ties the encoder, scoring, and loss layers together: one call produces
//! the loss report for a training example and accumulates exact parameter
//! gradients. Score-space gradients are derived in closed form and pushed
//! through [`backward_into`](crate::encoder::backward_into); the
//! self-distillation target distribution is detached, so no gradient flows
//! through it.

use ndarray::Array2;

use crate::encoder::{
    backward_into, encode_with_cache, EncoderParams, ForwardCache, GradientSet,
    MultiRepresentation, ReprGrad,
};
use crate::error::CoreError;
use crate::losses::{
    cosine_distance, distill_total, final_loss, log_floor, log_softmax_dist, mse_loss,
    primary_loss, self_distill_loss_with_target, similarity_matrix_loss, smoothed_targets,
    softmax_dist, CandidateScores, LossConfig, Phase1LossReport, Phase2Config, Phase2LossReport,
};
use crate::scoring::{colbert_argmax, score_pair, sparse_overlap_terms};
use crate::vocab::TokenSeq;

/// One phase-1 training example: a query against a candidate list that
/// contains exactly one positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase1Example {
    pub query: TokenSeq,
    pub candidates: Vec<TokenSeq>,
    /// Index of the positive inside `candidates`.
    pub positive: usize,
}

impl Phase1Example {
    /// Validate the candidate list shape.
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.candidates.len() < 2 {
            return Err(CoreError::InvalidConfig(format!(
                "phase-1 example needs a positive and at least one negative, got {} candidates",
                self.candidates.len()
            )));
        }
        if self.positive >= self.candidates.len() {
            return Err(CoreError::InvalidConfig(format!(
                "positive index {} out of range for {} candidates",
                self.positive,
                self.candidates.len()
            )));
        }
        Ok(())
    }
}

struct Encoded {
    repr: MultiRepresentation,
    cache: ForwardCache,
}

fn encode_example_with(
    params: &EncoderParams,
    example: &Phase1Example,
    cfg: &LossConfig,
) -> Result<(Encoded, Vec<Encoded>, CandidateScores), CoreError> {
    example.validate()?;
    let (q_repr, q_cache) = encode_with_cache(params, &example.query)?;
    let query = Encoded {
        repr: q_repr,
        cache: q_cache,
    };
    let mut cands = Vec::with_capacity(example.candidates.len());
    let mut breakdowns = Vec::with_capacity(example.candidates.len());
    for seq in &example.candidates {
        let (repr, cache) = encode_with_cache(params, seq)?;
        breakdowns.push(score_pair(&query.repr, &repr, &cfg.ensemble)?);
        cands.push(Encoded { repr, cache });
    }
    let scores = CandidateScores::from_breakdowns(&breakdowns, example.positive)?;
    Ok((query, cands, scores))
}

/// Loss value only, recomputing the detached distillation target from the
/// current parameters (the quantity optimized during training).
pub fn phase1_value(
    params: &EncoderParams,
    example: &Phase1Example,
    cfg: &LossConfig,
) -> Result<Phase1LossReport, CoreError> {
    let (_, _, scores) = encode_example_with(params, example, cfg)?;
    Ok(final_loss(&scores, cfg))
}

/// Loss value with the distillation target held fixed at `frozen_target`.
///
/// Matches what the analytic gradient differentiates: the target is a
/// constant under the stop-gradient, so finite differences of this function
/// (with the target captured at the base point) agree with
/// [`phase1_grads`].
pub fn phase1_value_frozen_target(
    params: &EncoderParams,
    example: &Phase1Example,
    cfg: &LossConfig,
    frozen_target: &[f64],
) -> Result<f64, CoreError> {
    let (_, _, scores) = encode_example_with(params, example, cfg)?;
    let primary = primary_loss(&scores, cfg);
    let distill = self_distill_loss_with_target(&scores, cfg, frozen_target);
    Ok((primary.total + distill.total) / 2.0)
}

/// The detached self-distillation target for `example` at the current
/// parameters: the temperature softmax over ensemble scores.
pub fn phase1_target(
    params: &EncoderParams,
    example: &Phase1Example,
    cfg: &LossConfig,
) -> Result<Vec<f64>, CoreError> {
    let (_, _, scores) = encode_example_with(params, example, cfg)?;
    Ok(softmax_dist(&scores.ensemble, cfg.temperature))
}

/// Per-modality gradients of the phase-1 loss with respect to the raw
/// candidate score vectors.
fn phase1_score_grads(scores: &CandidateScores, cfg: &LossConfig) -> [Vec<f64>; 3] {
    let tau = cfg.temperature;
    let c = scores.len();
    let t = smoothed_targets(c, scores.positive, cfg.label_smoothing);
    let p_d = softmax_dist(&scores.dense, tau);
    let p_s = softmax_dist(&scores.sparse, tau);
    let p_c = softmax_dist(&scores.colbert, tau);
    let p_e = softmax_dist(&scores.ensemble, tau);
    // Detached distillation target: numerically the ensemble distribution.
    let t_distill = &p_e;
    let floor = log_floor();
    let w = [cfg.ensemble.w1, cfg.ensemble.w2, cfg.ensemble.w3];
    let lambda = [cfg.lambda1, cfg.lambda2, cfg.lambda3];

    let mut out: [Vec<f64>; 3] = [vec![0.0; c], vec![0.0; c], vec![0.0; c]];
    for (m, (p_m, raw)) in [
        (&p_d, &scores.dense),
        (&p_s, &scores.sparse),
        (&p_c, &scores.colbert),
    ]
    .into_iter()
    .enumerate()
    {
        // Clamp mask: clamped log-probs contribute no gradient.
        let log_p = log_softmax_dist(raw, tau);
        let unclamped: Vec<bool> = log_p.iter().map(|&lp| lp >= floor).collect();
        let t_mass: f64 = t_distill
            .iter()
            .zip(unclamped.iter())
            .filter(|(_, &u)| u)
            .map(|(ti, _)| ti)
            .sum();
        for j in 0..c {
            // Contrastive half: this modality's own InfoNCE plus the
            // ensemble InfoNCE routed through the mixing weight.
            let g_primary = (lambda[m] * (p_m[j] - t[j]) + w[m] * (p_e[j] - t[j])) / (4.0 * tau);
            // Distillation half: cross-entropy toward the detached target,
            // with clamped terms masked out of the backward pass.
            let pull = if unclamped[j] { t_distill[j] } else { 0.0 };
            let g_distill = lambda[m] * (p_m[j] * t_mass - pull) / (3.0 * tau);
            out[m][j] = 0.5 * (g_primary + g_distill);
        }
    }
    out
}

/// Route one candidate's per-modality score gradients into representation
/// gradients for the query and that candidate.
fn accumulate_repr_grads(
    q: &MultiRepresentation,
    p: &MultiRepresentation,
    g_dense: f64,
    g_sparse: f64,
    g_colbert: f64,
    q_grad: &mut ReprGrad,
    p_grad: &mut ReprGrad,
) -> Result<(), CoreError> {
    // Dense: s = q·p.
    q_grad.d_dense.scaled_add(g_dense, &p.dense);
    p_grad.d_dense.scaled_add(g_dense, &q.dense);

    // Sparse: s = Σ over shared tokens of max-collapsed weight products.
    for term in sparse_overlap_terms(q, p) {
        q_grad.d_lexical[term.q_index] += g_sparse * term.p_weight;
        p_grad.d_lexical[term.p_index] += g_sparse * term.q_weight;
    }

    // Late interaction: s = (1/N) Σ_i ⟨e_q,i, e_p,argmax(i)⟩.
    let argmax = colbert_argmax(q, p)?;
    let n = argmax.len() as f64;
    for (i, &j) in argmax.iter().enumerate() {
        let scale = g_colbert / n;
        let q_row = q.multi_vectors.row(i).to_owned();
        let p_row = p.multi_vectors.row(j).to_owned();
        q_grad.d_multi.row_mut(i).scaled_add(scale, &p_row);
        p_grad.d_multi.row_mut(j).scaled_add(scale, &q_row);
    }
    Ok(())
}

/// Loss and exact parameter gradients for one phase-1 example.
///
/// Gradients are accumulated (summed) into `grads`, so calling this over a
/// batch yields the gradient of the batch-sum loss.
pub fn phase1_grads(
    params: &EncoderParams,
    example: &Phase1Example,
    cfg: &LossConfig,
    grads: &mut GradientSet,
) -> Result<Phase1LossReport, CoreError> {
    let (query, cands, scores) = encode_example_with(params, example, cfg)?;
    let report = final_loss(&scores, cfg);

    let [g_dense, g_sparse, g_colbert] = phase1_score_grads(&scores, cfg);

    let mut q_grad = ReprGrad::zeros_like(&query.repr);
    for (j, cand) in cands.iter().enumerate() {
        let mut p_grad = ReprGrad::zeros_like(&cand.repr);
        accumulate_repr_grads(
            &query.repr,
            &cand.repr,
            g_dense[j],
            g_sparse[j],
            g_colbert[j],
            &mut q_grad,
            &mut p_grad,
        )?;
        backward_into(params, &cand.cache, &p_grad, grads);
    }
    backward_into(params, &query.cache, &q_grad, grads);
    Ok(report)
}

/// One phase-2 batch: student texts paired with frozen teacher dense
/// embeddings, one row per text.
#[derive(Debug, Clone)]
pub struct Phase2Batch {
    pub texts: Vec<TokenSeq>,
    /// Teacher dense embeddings, row i for `texts[i]`.
    pub teacher_dense: Array2<f64>,
}

impl Phase2Batch {
    /// Validate shapes and teacher norms.
    pub fn validate(&self, dim: usize) -> Result<(), CoreError> {
        if self.texts.is_empty() {
            return Err(CoreError::EmptyInput("phase-2 batch has no texts".into()));
        }
        if self.teacher_dense.nrows() != self.texts.len() || self.teacher_dense.ncols() != dim {
            return Err(CoreError::DimensionMismatch(format!(
                "teacher embeddings {:?} for {} texts of dim {}",
                self.teacher_dense.shape(),
                self.texts.len(),
                dim
            )));
        }
        for (i, row) in self.teacher_dense.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if !norm.is_finite() || norm < 1e-300 {
                return Err(CoreError::ZeroVector("teacher dense embedding"));
            }
            let _ = i;
        }
        Ok(())
    }
}

fn phase2_compute(
    student: &EncoderParams,
    batch: &Phase2Batch,
    cfg: &Phase2Config,
    mut grads: Option<&mut GradientSet>,
) -> Result<Phase2LossReport, CoreError> {
    batch.validate(student.config.dim)?;
    let b = batch.texts.len();
    let d = student.config.dim;

    let mut encoded = Vec::with_capacity(b);
    let mut student_dense = Array2::zeros((b, d));
    for (i, seq) in batch.texts.iter().enumerate() {
        let (repr, cache) = encode_with_cache(student, seq)?;
        student_dense.row_mut(i).assign(&repr.dense);
        encoded.push((repr, cache));
    }

    // Mean cosine distance and mean squared distance over the batch.
    let mut cos_sum = 0.0;
    let mut mse_sum = 0.0;
    for i in 0..b {
        let e_s = encoded[i].0.dense.clone();
        let e_t = batch.teacher_dense.row(i).to_owned();
        cos_sum += cosine_distance(&e_s, &e_t)?;
        mse_sum += mse_loss(&e_s, &e_t)?;
    }
    let cosine = cos_sum / b as f64;
    let mse = mse_sum / b as f64;
    let similarity = similarity_matrix_loss(&student_dense, &batch.teacher_dense)?;
    let total = distill_total(cosine, mse, similarity, cfg);
    let report = Phase2LossReport {
        cosine,
        mse,
        similarity,
        total,
    };

    if let Some(grads) = grads.as_deref_mut() {
        // d(sim)/dS = (4/B²)·(S·Sᵀ − T·Tᵀ)·S, since both Grams are symmetric.
        let gram_diff =
            student_dense.dot(&student_dense.t()) - batch.teacher_dense.dot(&batch.teacher_dense.t());
        let d_sim = gram_diff.dot(&student_dense) * (4.0 / (b * b) as f64);

        for i in 0..b {
            let (repr, cache) = &encoded[i];
            let e_s = &repr.dense;
            let e_t = batch.teacher_dense.row(i);
            let t_norm = e_t.dot(&e_t).sqrt();
            let mut g = ReprGrad::zeros_like(repr);
            // Both distance terms have an exact zero gradient when the student
            // row equals the teacher row bitwise (the cosine gradient lies in
            // the radial direction the dense head projects out, and the mse
            // difference vanishes). Evaluating the general formulas there
            // leaves O(ε) rounding noise that would walk a converged student
            // off its teacher, so skip them for identical rows.
            let diff = e_s - &e_t.to_owned();
            if diff.iter().any(|&v| v != 0.0) {
                // cosine: d(1 − e_s·ê_t)/d e_s = −ê_t; the dense head's
                // backward projects out the radial component for us.
                g.d_dense
                    .scaled_add(-cfg.alpha1 / (b as f64 * t_norm), &e_t.to_owned());
                // mse: d‖e_s − e_t‖²/d e_s = 2(e_s − e_t).
                g.d_dense.scaled_add(2.0 * cfg.alpha2 / b as f64, &diff);
            }
            // similarity term.
            g.d_dense.scaled_add(cfg.alpha3, &d_sim.row(i).to_owned());
            backward_into(student, cache, &g, grads);
        }
    }
    Ok(report)
}

/// Phase-2 loss value for one batch.
pub fn phase2_value(
    student: &EncoderParams,
    batch: &Phase2Batch,
    cfg: &Phase2Config,
) -> Result<Phase2LossReport, CoreError> {
    phase2_compute(student, batch, cfg, None)
}

/// Phase-2 loss with exact gradients accumulated into `grads`.
pub fn phase2_grads(
    student: &EncoderParams,
    batch: &Phase2Batch,
    cfg: &Phase2Config,
    grads: &mut GradientSet,
) -> Result<Phase2LossReport, CoreError> {
    phase2_compute(student, batch, cfg, Some(grads))
}
