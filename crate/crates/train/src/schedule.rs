//! Cosine learning-rate decay with warm restarts, and global-norm clipping.

use serde::{Deserialize, Serialize};
use treble_core::{CoreError, GradientSet};

use crate::error::TrainError;

/// Cosine warm-restart schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    /// Peak learning rate at the start of every cycle.
    pub lr_max: f64,
    /// Floor the rate decays toward within a cycle.
    pub lr_min: f64,
    /// Length of the first cycle, in steps.
    pub t0: usize,
    /// Cycle-length multiplier applied at each restart.
    pub mult: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            lr_max: 2e-5,
            lr_min: 0.0,
            t0: 100,
            mult: 2,
        }
    }
}

impl Schedule {
    /// Check the schedule invariants.
    pub fn validate(&self) -> Result<(), TrainError> {
        if !self.lr_max.is_finite() || !self.lr_min.is_finite() {
            return Err(TrainError::InvalidConfig(
                "learning rates must be finite".into(),
            ));
        }
        if !(self.lr_max > self.lr_min && self.lr_min >= 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "need lr_max > lr_min >= 0, got lr_max={} lr_min={}",
                self.lr_max, self.lr_min
            )));
        }
        if self.t0 == 0 {
            return Err(TrainError::InvalidConfig("cycle length t0 must be >= 1".into()));
        }
        if self.mult == 0 {
            return Err(TrainError::InvalidConfig("restart multiplier must be >= 1".into()));
        }
        Ok(())
    }
}

/// Learning rate at `step`: cosine decay from `lr_max` to `lr_min` within
/// each cycle, restarting at `lr_max` when a cycle ends; cycle lengths grow
/// by `mult` after every restart.
pub fn cosine_restart_lr(step: usize, s: &Schedule) -> f64 {
    let (mut start, mut len) = (0usize, s.t0);
    if s.mult == 1 {
        start = (step / s.t0) * s.t0;
    } else {
        while step >= start + len {
            start += len;
            len *= s.mult;
        }
    }
    let t = (step - start) as f64 / len as f64;
    s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Outcome of one clipping application.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipReport {
    /// Global L2 norm before clipping.
    pub pre_norm: f64,
    /// Global L2 norm after clipping.
    pub post_norm: f64,
    /// Whether scaling was applied.
    pub clipped: bool,
}

/// Scale `grads` uniformly so its global L2 norm is at most `threshold`.
pub fn clip_gradients(grads: &mut GradientSet, threshold: f64) -> Result<ClipReport, TrainError> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(TrainError::InvalidConfig(format!(
            "clip threshold must be a positive finite number, got {threshold}"
        )));
    }
    grads.check_finite()?;
    let pre_norm = grads.global_norm();
    let clipped = pre_norm > threshold;
    if clipped {
        grads.tensors.scale(threshold / pre_norm);
    }
    Ok(ClipReport {
        pre_norm,
        post_norm: if clipped { grads.global_norm() } else { pre_norm },
        clipped,
    })
}

/// Non-finite gradients abort with the step that produced them.
pub(crate) fn attach_step(err: TrainError, step: usize) -> TrainError {
    match err {
        TrainError::Core(CoreError::NonFinite(detail)) => {
            TrainError::NonFiniteGradient { step, detail }
        }
        other => other,
    }
}
