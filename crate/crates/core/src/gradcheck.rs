//! Finite-difference verification of the analytic gradients.
//!
//! Central differences `(f(θ+h·e_i) − f(θ−h·e_i)) / 2h` are compared
//! coordinate-by-coordinate against the backward pass. The phase-1 value
//! function holds the self-distillation target frozen at the base point,
//! because that is the function the stop-gradient objective actually
//! differentiates.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{EncoderParams, GradientSet};
use crate::error::CoreError;
use crate::losses::{LossConfig, Phase2Config};
use crate::objective::{
    phase1_grads, phase1_target, phase1_value_frozen_target, phase2_grads, phase2_value,
    Phase1Example, Phase2Batch,
};

/// Probe settings for a finite-difference sweep.
#[derive(Debug, Clone, Copy)]
pub struct FdOptions {
    /// Central-difference step size.
    pub step: f64,
    /// Coordinates probed per tensor; 0 probes every coordinate.
    pub samples_per_tensor: usize,
    /// Seed for choosing which coordinates to probe.
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            samples_per_tensor: 4,
            seed: 0,
        }
    }
}

/// Worst-case disagreement found by a sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Number of coordinates probed.
    pub checked: usize,
    /// Largest relative error over all probes.
    pub max_rel_err: f64,
    /// Tensor owning the worst probe.
    pub worst_tensor: String,
    /// Flat index of the worst probe within its tensor.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl GradCheckReport {
    /// True when every probe stayed within `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Relative error with an absolute floor: exact for large magnitudes,
/// absolute once both values fall below 1.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Sweep sampled coordinates of every tensor, comparing `analytic` against
/// central differences of `value_fn`.
pub fn finite_difference_check<F>(
    params: &EncoderParams,
    analytic: &GradientSet,
    opts: &FdOptions,
    value_fn: F,
) -> Result<GradCheckReport, CoreError>
where
    F: Fn(&EncoderParams) -> Result<f64, CoreError>,
{
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(CoreError::InvalidConfig(format!(
            "finite-difference step must be positive, got {}",
            opts.step
        )));
    }
    let analytic_by_name: BTreeMap<String, Vec<f64>> = analytic
        .tensors
        .named_tensors()
        .into_iter()
        .map(|(name, _, data)| (name, data.to_vec()))
        .collect();

    let shapes: Vec<(String, usize)> = params
        .tensors
        .named_tensors()
        .into_iter()
        .map(|(name, _, data)| (name, data.len()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };

    for (ti, (name, len)) in shapes.iter().enumerate() {
        let grad = analytic_by_name
            .get(name)
            .ok_or_else(|| CoreError::DimensionMismatch(format!("no gradient tensor {name}")))?;
        let indices: Vec<usize> = if opts.samples_per_tensor == 0 || *len <= opts.samples_per_tensor
        {
            (0..*len).collect()
        } else {
            rand::seq::index::sample(&mut rng, *len, opts.samples_per_tensor).into_vec()
        };
        for idx in indices {
            let probe = |delta: f64| -> Result<f64, CoreError> {
                let mut shifted = params.clone();
                shifted.tensors.named_tensors_mut()[ti].1[idx] += delta;
                value_fn(&shifted)
            };
            let f_plus = probe(opts.step)?;
            let f_minus = probe(-opts.step)?;
            let numeric = (f_plus - f_minus) / (2.0 * opts.step);
            let err = rel_err(numeric, grad[idx]);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_tensor = name.clone();
                report.worst_index = idx;
                report.worst_analytic = grad[idx];
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Finite-difference check of the full phase-1 objective for one example.
pub fn phase1_gradient_check(
    params: &EncoderParams,
    example: &Phase1Example,
    cfg: &LossConfig,
    opts: &FdOptions,
) -> Result<GradCheckReport, CoreError> {
    let mut analytic = GradientSet::zeros(&params.config);
    phase1_grads(params, example, cfg, &mut analytic)?;
    let target = phase1_target(params, example, cfg)?;
    finite_difference_check(params, &analytic, opts, |p| {
        phase1_value_frozen_target(p, example, cfg, &target)
    })
}

/// Finite-difference check of the phase-2 objective for one batch.
pub fn phase2_gradient_check(
    student: &EncoderParams,
    batch: &Phase2Batch,
    cfg: &Phase2Config,
    opts: &FdOptions,
) -> Result<GradCheckReport, CoreError> {
    let mut analytic = GradientSet::zeros(&student.config);
    phase2_grads(student, batch, cfg, &mut analytic)?;
    finite_difference_check(student, &analytic, opts, |p| {
        phase2_value(p, batch, cfg).map(|r| r.total)
    })
}
