//! Structured, line-oriented training logs.

use serde::{Deserialize, Serialize};

/// Loss components of one optimizer step, tagged by phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "lowercase")]
pub enum StepLoss {
    /// Phase 1: contrastive primary plus self-distillation halves.
    One { primary: f64, distill: f64, total: f64 },
    /// Phase 2: the three teacher-distillation components.
    Two {
        cosine: f64,
        mse: f64,
        similarity: f64,
        total: f64,
    },
}

impl StepLoss {
    /// The combined loss driving the update.
    pub fn total(&self) -> f64 {
        match *self {
            StepLoss::One { total, .. } | StepLoss::Two { total, .. } => total,
        }
    }
}

/// One optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Global step index, strictly increasing across the run.
    pub step: usize,
    /// Epoch this step belongs to.
    pub epoch: usize,
    /// Learning rate applied.
    pub lr: f64,
    /// Loss components at this step.
    pub loss: StepLoss,
    /// Global gradient norm before clipping.
    pub grad_norm_pre: f64,
    /// Global gradient norm after clipping.
    pub grad_norm_post: f64,
    /// Checkpoint file written at this step, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

/// One validation pass (phase 1 runs one per epoch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Global step count when the evaluation ran.
    pub step: usize,
    /// Epoch just finished.
    pub epoch: usize,
    /// Mean phase-1 loss over the validation set.
    pub val_loss: f64,
    /// Ensemble Recall@1 on the validation set.
    pub val_recall1: f64,
    /// Whether `val_loss` improved on the best seen so far.
    pub improved: bool,
}

/// Chronological record of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Every optimizer step, in order.
    pub steps: Vec<StepRecord>,
    /// Every validation pass, in order.
    pub evals: Vec<EvalRecord>,
}

impl TrainLog {
    /// Check the structural invariant: step indices strictly increase.
    pub fn is_monotonic(&self) -> bool {
        self.steps.windows(2).all(|w| w[0].step < w[1].step)
            && self.evals.windows(2).all(|w| w[0].step <= w[1].step)
    }

    /// Serialize as line-oriented JSON: one `step` or `eval` object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut evals = self.evals.iter().peekable();
        for step in &self.steps {
            out.push_str(&serde_json::json!({ "step": step }).to_string());
            out.push('\n');
            while evals.peek().is_some_and(|e| e.step <= step.step + 1) {
                out.push_str(&serde_json::json!({ "eval": evals.next().unwrap() }).to_string());
                out.push('\n');
            }
        }
        for rest in evals {
            out.push_str(&serde_json::json!({ "eval": rest }).to_string());
            out.push('\n');
        }
        out
    }
}
