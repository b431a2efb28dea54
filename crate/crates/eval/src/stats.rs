//! Paired significance testing, effect size, and Student-t intervals.
//!
//! All routines use sample (n−1) variance. The t-distribution quantiles and
//! tail probabilities come from `statrs`; everything else is computed directly
//! from the textbook formulas.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::EvalError;

/// Arithmetic mean. Callers guarantee non-empty input.
pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance (n−1 denominator). Zero for a single value.
pub(crate) fn sample_var(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Sample standard deviation (n−1 denominator).
pub(crate) fn sample_std(values: &[f64]) -> f64 {
    sample_var(values).sqrt()
}

/// Outcome of a two-sided paired t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    /// The t statistic of the mean difference.
    pub t: f64,
    /// Degrees of freedom, n − 1.
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

/// Two-sided paired t-test on the per-query differences `a[i] − b[i]`.
///
/// Identical samples (all differences zero) yield `t = 0, p = 1` by decision.
/// Non-zero but constant differences have zero variance; the statistic
/// degenerates to `±∞` with `p = 0`, the limit of the ordinary formula.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewValues {
            what: "paired_t_test",
            needed: 2,
            got: a.len(),
        });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let df = n - 1.0;
    let d_mean = mean(&diffs);
    let d_std = sample_std(&diffs);
    if d_std == 0.0 {
        return Ok(if d_mean == 0.0 {
            PairedTTest { t: 0.0, df, p: 1.0 }
        } else {
            PairedTTest {
                t: d_mean.signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let t = d_mean / (d_std / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1 is a valid t-distribution");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(PairedTTest { t, df, p })
}

/// Bonferroni correction: multiply the p-value by the comparison count, capped at 1.
///
/// # Panics
/// Panics if `comparisons` is zero.
pub fn bonferroni(p: f64, comparisons: usize) -> f64 {
    assert!(comparisons >= 1, "bonferroni requires at least one comparison");
    (p * comparisons as f64).min(1.0)
}

/// Cohen's d with the pooled-variance (independent-groups) denominator.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    for (name, s) in [("cohens_d sample a", a), ("cohens_d sample b", b)] {
        if s.len() < 2 {
            return Err(EvalError::TooFewValues {
                what: name,
                needed: 2,
                got: s.len(),
            });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled_var = ((na - 1.0) * sample_var(a) + (nb - 1.0) * sample_var(b)) / (na + nb - 2.0);
    if pooled_var == 0.0 {
        return Err(EvalError::ZeroPooledSd);
    }
    Ok((mean(a) - mean(b)) / pooled_var.sqrt())
}

/// Student-t confidence interval `mean ± t(q, n−1) · s/√n` at the given level.
///
/// Constant input yields the zero-width interval at the constant.
pub fn confidence_interval(values: &[f64], level: f64) -> Result<(f64, f64), EvalError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EvalError::InvalidLevel(level));
    }
    if values.len() < 2 {
        return Err(EvalError::TooFewValues {
            what: "confidence_interval",
            needed: 2,
            got: values.len(),
        });
    }
    // Guarantee an exactly zero-width interval for constant input, which the
    // summed mean alone cannot promise in floating point.
    if values.iter().all(|v| *v == values[0]) {
        return Ok((values[0], values[0]));
    }
    let n = values.len() as f64;
    let m = mean(values);
    let s = sample_std(values);
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("df >= 1 is a valid t-distribution");
    let half = dist.inverse_cdf(0.5 + level / 2.0) * s / n.sqrt();
    Ok((m - half, m + half))
}
