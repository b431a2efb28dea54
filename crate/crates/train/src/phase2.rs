//! Phase-2 training: distillation of the student's dense head toward a
//! frozen teacher, over curriculum-ordered definition and KG texts.
//!
//! Texts are visited in [`curriculum_order`] — ascending complexity,
//! definitions before knowledge-graph statements — every epoch. Teacher
//! embeddings are computed once up front; the teacher is never mutated,
//! which the returned digest lets callers verify.

use std::path::PathBuf;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use treble_core::checkpoint;
use treble_core::encoder::encode;
use treble_core::losses::Phase2Config;
use treble_core::objective::{phase2_grads, Phase2Batch};
use treble_core::vocab::{count_tokens, tokenize, Vocab};
use treble_core::{EncoderParams, GradientSet, TokenSeq};

use crate::batching::{curriculum_order, DistillText};
use crate::error::TrainError;
use crate::log::{StepLoss, StepRecord, TrainLog};
use crate::phase1::maybe_checkpoint;
use crate::schedule::{attach_step, clip_gradients, cosine_restart_lr, Schedule};

/// Phase-2 training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phase2TrainConfig {
    /// Learning-rate schedule.
    pub schedule: Schedule,
    /// Global-norm clip threshold.
    pub clip_threshold: f64,
    /// Texts per batch.
    pub batch_size: usize,
    /// Passes over the curriculum.
    pub epochs: usize,
    /// Distillation loss weights.
    pub loss: Phase2Config,
    /// Write a checkpoint every this many optimizer steps.
    pub checkpoint_every: Option<usize>,
    /// Directory receiving periodic checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for Phase2TrainConfig {
    fn default() -> Self {
        Phase2TrainConfig {
            schedule: Schedule::default(),
            clip_threshold: 1.0,
            batch_size: 8,
            epochs: 3,
            loss: Phase2Config::default(),
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

impl Phase2TrainConfig {
    /// Check all config invariants.
    pub fn validate(&self) -> Result<(), TrainError> {
        self.schedule.validate()?;
        if !(self.clip_threshold > 0.0) || !self.clip_threshold.is_finite() {
            return Err(TrainError::InvalidConfig(
                "clip threshold must be positive and finite".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be >= 1".into()));
        }
        for (name, w) in [
            ("alpha1", self.loss.alpha1),
            ("alpha2", self.loss.alpha2),
            ("alpha3", self.loss.alpha3),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(TrainError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// What a finished phase-2 run hands back.
#[derive(Debug, Clone)]
pub struct Phase2Outcome {
    /// The distilled student parameters.
    pub params: EncoderParams,
    /// Chronological step records.
    pub log: TrainLog,
    /// Optimizer steps taken.
    pub steps_run: usize,
    /// Digest of the (unchanged) teacher checkpoint, for frozen-teacher
    /// verification by callers.
    pub teacher_digest: String,
}

/// Run phase-2 distillation to completion. The teacher is read-only.
pub fn train_phase2(
    student: EncoderParams,
    teacher: &EncoderParams,
    vocab: &Vocab,
    texts: &[DistillText],
    cfg: &Phase2TrainConfig,
) -> Result<Phase2Outcome, TrainError> {
    cfg.validate()?;
    if texts.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (index, t) in texts.iter().enumerate() {
        if count_tokens(&t.text) == 0 {
            return Err(TrainError::BadTriplet {
                index,
                reason: "distillation text tokenizes to nothing".into(),
            });
        }
    }
    if student.config.dim != teacher.config.dim {
        return Err(TrainError::InvalidConfig(format!(
            "student dim {} != teacher dim {}",
            student.config.dim, teacher.config.dim
        )));
    }

    let teacher_digest = checkpoint::digest(teacher, vocab)?;
    let mut params = student;

    // Curriculum order is fixed for the whole run; teacher embeddings are
    // precomputed once since the teacher never changes.
    let order = curriculum_order(texts);
    let seqs: Vec<TokenSeq> = texts.iter().map(|t| tokenize(&t.text, vocab)).collect();
    let mut teacher_dense: Vec<Array1<f64>> = Vec::with_capacity(seqs.len());
    for seq in &seqs {
        teacher_dense.push(encode(teacher, seq)?.dense);
    }
    let batches: Vec<Vec<usize>> = order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect();

    let dim = params.config.dim;
    let mut log = TrainLog::default();
    let mut grads = GradientSet::zeros(&params.config);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        for indices in &batches {
            let mut dense = Array2::zeros((indices.len(), dim));
            for (row, &i) in indices.iter().enumerate() {
                dense.row_mut(row).assign(&teacher_dense[i]);
            }
            let batch = Phase2Batch {
                texts: indices.iter().map(|&i| seqs[i].clone()).collect(),
                teacher_dense: dense,
            };
            let report = phase2_grads(&params, &batch, &cfg.loss, &mut grads)?;
            if !report.total.is_finite() {
                return Err(TrainError::NonFiniteLoss { step });
            }
            let clip = clip_gradients(&mut grads, cfg.clip_threshold)
                .map_err(|e| attach_step(e, step))?;
            let lr = cosine_restart_lr(step, &cfg.schedule);
            params.tensors.axpy(-lr, &grads.tensors);
            let ckpt = maybe_checkpoint(
                &params,
                vocab,
                cfg.checkpoint_every,
                cfg.checkpoint_dir.as_ref(),
                "phase2",
                step,
            )?;
            log.steps.push(StepRecord {
                step,
                epoch,
                lr,
                loss: StepLoss::Two {
                    cosine: report.cosine,
                    mse: report.mse,
                    similarity: report.similarity,
                    total: report.total,
                },
                grad_norm_pre: clip.pre_norm,
                grad_norm_post: clip.post_norm,
                checkpoint: ckpt,
            });
            step += 1;
            grads.tensors.scale(0.0);
        }
    }

    // The teacher is borrowed immutably, so this cannot fire; it documents
    // and enforces the frozen-teacher contract all the same.
    debug_assert_eq!(checkpoint::digest(teacher, vocab)?, teacher_digest);

    Ok(Phase2Outcome {
        params,
        log,
        steps_run: step,
        teacher_digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batching::TextKind;

    #[test]
    fn config_validation_covers_every_field() {
        assert!(Phase2TrainConfig::default().validate().is_ok());
        for breaker in [
            |c: &mut Phase2TrainConfig| c.clip_threshold = -1.0,
            |c: &mut Phase2TrainConfig| c.batch_size = 0,
            |c: &mut Phase2TrainConfig| c.schedule.mult = 0,
            |c: &mut Phase2TrainConfig| c.loss.alpha2 = f64::NAN,
            |c: &mut Phase2TrainConfig| c.loss.alpha3 = -0.5,
        ] {
            let mut cfg = Phase2TrainConfig::default();
            breaker(&mut cfg);
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn empty_texts_and_blank_texts_error() {
        let vocab = Vocab::build(["alpha"]);
        let config = treble_core::EncoderConfig {
            dim: 4,
            layers: 1,
            heads: 2,
            max_seq_len: 8,
            vocab_size: vocab.len(),
            seed: 0,
        };
        let params = EncoderParams::init(&config).unwrap();
        let cfg = Phase2TrainConfig::default();
        assert!(matches!(
            train_phase2(params.clone(), &params, &vocab, &[], &cfg),
            Err(TrainError::EmptyDataset)
        ));
        let blank = vec![DistillText {
            text: "---".into(),
            kind: TextKind::Definition,
        }];
        assert!(matches!(
            train_phase2(params.clone(), &params, &vocab, &blank, &cfg),
            Err(TrainError::BadTriplet { index: 0, .. })
        ));
    }
}
