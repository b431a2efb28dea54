//! Phase-1 training: the contrastive objective with self-knowledge
//! distillation, on (query, positive, five negatives) triplets.
//!
//! Plain gradient descent under the cosine warm-restart schedule with
//! global-norm clipping. The batch loss is the *sum* of per-example losses,
//! matching the gradients accumulated by the objective. Runs are fully
//! deterministic given (config, seed, data).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use treble_core::checkpoint;
use treble_core::objective::{phase1_grads, phase1_value, Phase1Example};
use treble_core::vocab::{count_tokens, tokenize, Vocab};
use treble_core::{EncoderParams, EnsembleWeights, GradientSet, LossConfig, Modality, TokenSeq};
use treble_eval::{evaluate, EvalItem};

use crate::batching::make_batches;
use crate::error::TrainError;
use crate::log::{EvalRecord, StepLoss, StepRecord, TrainLog};
use crate::schedule::{attach_step, clip_gradients, cosine_restart_lr, Schedule};

/// Negatives per training triplet.
pub const NEGATIVES: usize = 5;

/// One contrastive training triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletExample {
    /// Query text.
    pub query: String,
    /// The one relevant passage.
    pub positive: String,
    /// Exactly five irrelevant passages.
    pub negatives: Vec<String>,
    /// Optional subdomain label, forwarded to validation reporting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

impl TripletExample {
    /// Check the triplet contract: five negatives, nothing empty after
    /// tokenization.
    pub fn validate(&self) -> Result<(), String> {
        if self.negatives.len() != NEGATIVES {
            return Err(format!(
                "expected {NEGATIVES} negatives, got {}",
                self.negatives.len()
            ));
        }
        if count_tokens(&self.query) == 0 {
            return Err("query tokenizes to nothing".into());
        }
        if count_tokens(&self.positive) == 0 {
            return Err("positive tokenizes to nothing".into());
        }
        for (i, n) in self.negatives.iter().enumerate() {
            if count_tokens(n) == 0 {
                return Err(format!("negative {i} tokenizes to nothing"));
            }
        }
        Ok(())
    }

    /// Total token count, the length-bucketing key.
    pub fn length(&self) -> usize {
        count_tokens(&self.query)
            + count_tokens(&self.positive)
            + self.negatives.iter().map(|n| count_tokens(n)).sum::<usize>()
    }

    /// View as an evaluation item (positive first, then negatives).
    pub fn to_eval_item(&self) -> EvalItem {
        EvalItem {
            query: self.query.clone(),
            positive: self.positive.clone(),
            negatives: self.negatives.clone(),
            stratum: self.stratum.clone(),
        }
    }
}

/// Train/validation split of triplets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Triplets the optimizer steps on.
    pub train: Vec<TripletExample>,
    /// Held-out triplets for early stopping and best-model selection;
    /// may be empty, which disables both.
    #[serde(default)]
    pub validation: Vec<TripletExample>,
}

impl Dataset {
    /// Validate every triplet, reporting the first offender by index.
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.train.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        for (index, t) in self.train.iter().chain(&self.validation).enumerate() {
            t.validate()
                .map_err(|reason| TrainError::BadTriplet { index, reason })?;
        }
        Ok(())
    }
}

/// Phase-1 training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Learning-rate schedule.
    pub schedule: Schedule,
    /// Global-norm clip threshold.
    pub clip_threshold: f64,
    /// Examples per optimizer sub-batch.
    pub batch_size: usize,
    /// Passes over the training set.
    pub epochs: usize,
    /// Seed for bucket shuffling (per-epoch offsets are derived from it).
    pub seed: u64,
    /// Length-bucket count for padding-aware batching.
    pub buckets: usize,
    /// Loss hyper-parameters (temperature, smoothing, modality weights).
    pub loss: LossConfig,
    /// Ensemble mixing weights used for scoring and validation ranking.
    pub weights: EnsembleWeights,
    /// Sub-batches summed into one update; 1 disables accumulation.
    pub accum_steps: usize,
    /// Augment each example's candidates with the other batch members'
    /// positives.
    pub in_batch_negatives: bool,
    /// Stop after this many consecutive validation passes without
    /// improvement; 0 disables early stopping.
    pub early_stop_window: usize,
    /// Write a checkpoint every this many optimizer steps.
    pub checkpoint_every: Option<usize>,
    /// Directory receiving periodic checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: Schedule::default(),
            clip_threshold: 1.0,
            batch_size: 8,
            epochs: 3,
            seed: 0,
            buckets: 4,
            loss: LossConfig::default(),
            weights: EnsembleWeights::default(),
            accum_steps: 1,
            in_batch_negatives: false,
            early_stop_window: 5,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
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
        if self.buckets == 0 {
            return Err(TrainError::InvalidConfig("bucket count must be >= 1".into()));
        }
        if self.accum_steps == 0 {
            return Err(TrainError::InvalidConfig(
                "accumulation steps must be >= 1 (1 = off)".into(),
            ));
        }
        self.loss.validate()?;
        Ok(())
    }
}

/// What a finished phase-1 run hands back.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The selected parameters: best validation Recall@1 when a validation
    /// set exists, otherwise the final step's parameters.
    pub params: EncoderParams,
    /// Chronological step and evaluation records.
    pub log: TrainLog,
    /// Optimizer steps taken.
    pub steps_run: usize,
    /// Whether the early-stopping window tripped.
    pub stopped_early: bool,
    /// Best validation Recall@1 observed, if validation ran.
    pub best_val_recall1: Option<f64>,
}

/// Tokenized triplet, ready for batch assembly.
struct Prepared {
    query: TokenSeq,
    positive: TokenSeq,
    negatives: Vec<TokenSeq>,
}

/// Build one example's candidate list: own positive first, own negatives,
/// then (optionally) the positives of every other batch member.
fn assemble(prepared: &[Prepared], batch: &[usize], slot: usize, in_batch: bool) -> Phase1Example {
    let own = &prepared[batch[slot]];
    let extra = if in_batch { batch.len() - 1 } else { 0 };
    let mut candidates = Vec::with_capacity(1 + own.negatives.len() + extra);
    candidates.push(own.positive.clone());
    candidates.extend(own.negatives.iter().cloned());
    if in_batch {
        for (j, &other) in batch.iter().enumerate() {
            if j != slot {
                candidates.push(prepared[other].positive.clone());
            }
        }
    }
    Phase1Example {
        query: own.query.clone(),
        candidates,
        positive: 0,
    }
}

/// Mean phase-1 loss over a prepared validation set.
fn validation_loss(
    params: &EncoderParams,
    examples: &[Phase1Example],
    loss: &LossConfig,
) -> Result<f64, TrainError> {
    let mut sum = 0.0;
    for e in examples {
        sum += phase1_value(params, e, loss)?.total;
    }
    Ok(sum / examples.len() as f64)
}

pub(crate) fn maybe_checkpoint(
    params: &EncoderParams,
    vocab: &Vocab,
    cfg_every: Option<usize>,
    cfg_dir: Option<&PathBuf>,
    prefix: &str,
    step: usize,
) -> Result<Option<String>, TrainError> {
    let (Some(every), Some(dir)) = (cfg_every, cfg_dir) else {
        return Ok(None);
    };
    if (step + 1) % every != 0 {
        return Ok(None);
    }
    let path = dir.join(format!("{prefix}-step{:06}.ckpt", step + 1));
    checkpoint::save(&path, params, vocab)?;
    Ok(Some(path.display().to_string()))
}

/// Run phase-1 training to completion.
pub fn train_phase1(
    params: EncoderParams,
    vocab: &Vocab,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    data.validate()?;

    let mut params = params;
    let prepared: Vec<Prepared> = data
        .train
        .iter()
        .map(|t| Prepared {
            query: tokenize(&t.query, vocab),
            positive: tokenize(&t.positive, vocab),
            negatives: t.negatives.iter().map(|n| tokenize(n, vocab)).collect(),
        })
        .collect();
    let lengths: Vec<usize> = data.train.iter().map(TripletExample::length).collect();

    let val_items: Vec<EvalItem> = data.validation.iter().map(TripletExample::to_eval_item).collect();
    let val_examples: Vec<Phase1Example> = data
        .validation
        .iter()
        .map(|t| {
            let mut candidates = vec![tokenize(&t.positive, vocab)];
            candidates.extend(t.negatives.iter().map(|n| tokenize(n, vocab)));
            Phase1Example {
                query: tokenize(&t.query, vocab),
                candidates,
                positive: 0,
            }
        })
        .collect();

    let mut log = TrainLog::default();
    let mut step = 0usize;
    let mut grads = GradientSet::zeros(&params.config);
    let mut pending = 0usize;
    let mut sums = [0.0f64; 3];

    let mut best_val_loss = f64::INFINITY;
    let mut since_improve = 0usize;
    let mut stopped_early = false;
    let mut best_val_recall1: Option<f64> = None;
    let mut best_params: Option<EncoderParams> = None;

    'epochs: for epoch in 0..cfg.epochs {
        let batches = make_batches(
            &lengths,
            cfg.batch_size,
            cfg.buckets,
            cfg.seed.wrapping_add(epoch as u64),
        )?;
        let last_batch = batches.len() - 1;
        for (b_idx, batch) in batches.iter().enumerate() {
            for slot in 0..batch.len() {
                let example = assemble(&prepared, batch, slot, cfg.in_batch_negatives);
                let report = phase1_grads(&params, &example, &cfg.loss, &mut grads)?;
                sums[0] += report.primary.total;
                sums[1] += report.distill.total;
                sums[2] += report.total;
            }
            pending += 1;
            if pending < cfg.accum_steps && b_idx != last_batch {
                continue;
            }
            if !sums[2].is_finite() {
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
                "phase1",
                step,
            )?;
            log.steps.push(StepRecord {
                step,
                epoch,
                lr,
                loss: StepLoss::One {
                    primary: sums[0],
                    distill: sums[1],
                    total: sums[2],
                },
                grad_norm_pre: clip.pre_norm,
                grad_norm_post: clip.post_norm,
                checkpoint: ckpt,
            });
            step += 1;
            grads.tensors.scale(0.0);
            pending = 0;
            sums = [0.0; 3];
        }

        if !val_items.is_empty() {
            let val_loss = validation_loss(&params, &val_examples, &cfg.loss)?;
            let report = evaluate(&params, vocab, &val_items, &cfg.weights, Modality::Ensemble)?;
            let val_recall1 = report.recall_at_1.value;
            let improved = val_loss < best_val_loss;
            log.evals.push(EvalRecord {
                step,
                epoch,
                val_loss,
                val_recall1,
                improved,
            });
            if improved {
                best_val_loss = val_loss;
                since_improve = 0;
            } else {
                since_improve += 1;
            }
            if best_val_recall1.map_or(true, |best| val_recall1 > best) {
                best_val_recall1 = Some(val_recall1);
                best_params = Some(params.clone());
            }
            if cfg.early_stop_window > 0 && since_improve >= cfg.early_stop_window {
                stopped_early = true;
                break 'epochs;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params.unwrap_or(params),
        log,
        steps_run: step,
        stopped_early,
        best_val_recall1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triplet(q: &str, p: &str, negs: [&str; 5]) -> TripletExample {
        TripletExample {
            query: q.into(),
            positive: p.into(),
            negatives: negs.iter().map(|s| s.to_string()).collect(),
            stratum: None,
        }
    }

    #[test]
    fn triplet_validation_catches_shape_and_empties() {
        let good = triplet("q a", "p b", ["n1", "n2", "n3", "n4", "n5"]);
        assert!(good.validate().is_ok());

        let mut short = good.clone();
        short.negatives.pop();
        assert!(short.validate().unwrap_err().contains("negatives"));

        let mut empty_q = good.clone();
        empty_q.query = "  ,, ".into();
        assert!(empty_q.validate().unwrap_err().contains("query"));

        let mut empty_n = good.clone();
        empty_n.negatives[2] = "!!".into();
        assert!(empty_n.validate().unwrap_err().contains("negative 2"));
    }

    #[test]
    fn length_sums_all_fields() {
        let t = triplet("one two", "three", ["a", "b", "c", "d", "e f"]);
        assert_eq!(t.length(), 2 + 1 + 6);
    }

    #[test]
    fn dataset_validation_reports_the_offending_index() {
        let good = triplet("q", "p", ["a", "b", "c", "d", "e"]);
        let mut bad = good.clone();
        bad.negatives.truncate(3);
        let data = Dataset {
            train: vec![good.clone(), good, bad],
            validation: vec![],
        };
        match data.validate().unwrap_err() {
            TrainError::BadTriplet { index, .. } => assert_eq!(index, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_train_set_is_an_error() {
        let data = Dataset::default();
        assert!(matches!(data.validate(), Err(TrainError::EmptyDataset)));
    }

    #[test]
    fn config_validation_covers_every_field() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for breaker in [
            |c: &mut TrainConfig| c.clip_threshold = 0.0,
            |c: &mut TrainConfig| c.batch_size = 0,
            |c: &mut TrainConfig| c.buckets = 0,
            |c: &mut TrainConfig| c.accum_steps = 0,
            |c: &mut TrainConfig| c.schedule.t0 = 0,
            |c: &mut TrainConfig| c.loss.temperature = 0.0,
        ] {
            let mut cfg = TrainConfig::default();
            breaker(&mut cfg);
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn in_batch_assembly_adds_other_positives() {
        let vocab = Vocab::build(["alpha beta gamma delta epsilon zeta"]);
        let prepared: Vec<Prepared> = ["alpha", "beta", "gamma"]
            .iter()
            .map(|w| Prepared {
                query: tokenize(w, &vocab),
                positive: tokenize(&format!("{w} delta"), &vocab),
                negatives: vec![tokenize("epsilon", &vocab); 5],
            })
            .collect();
        let batch = [0usize, 2];
        let plain = assemble(&prepared, &batch, 0, false);
        assert_eq!(plain.candidates.len(), 6);
        let augmented = assemble(&prepared, &batch, 0, true);
        assert_eq!(augmented.candidates.len(), 7);
        assert_eq!(augmented.candidates[6].tokens, prepared[2].positive.tokens);
        assert_eq!(augmented.positive, 0);
    }
}
