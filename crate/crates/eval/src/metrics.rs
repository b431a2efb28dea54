//! Ranking metrics over held-out (query, positive, negatives) evaluation items.
//!
//! Each query is ranked against exactly six candidates (its positive plus five
//! negatives). Ties are broken *against* the positive, so every reported
//! metric is a lower bound on what any other tie policy would report.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use treble_core::encoder::encode;
use treble_core::scoring::score_pair;
use treble_core::vocab::tokenize;
use treble_core::{CoreError, EncoderParams, EnsembleWeights, Modality, ScoreBreakdown, Vocab};

use crate::error::EvalError;
use crate::stats::{confidence_interval, mean, sample_std};

/// Candidates per evaluation query: one positive plus five negatives.
pub const CANDIDATES: usize = 6;

/// One held-out retrieval item, optionally tagged with a subdomain stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    /// Query text.
    pub query: String,
    /// The one relevant passage.
    pub positive: String,
    /// Exactly five irrelevant passages.
    pub negatives: Vec<String>,
    /// Optional subdomain label used for stratified reporting and folding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

/// Rank of one query's positive (1-based), with its stratum label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    /// 1-based rank of the positive among its candidates.
    pub rank: usize,
    /// Stratum label carried over from the evaluation item.
    pub stratum: Option<String>,
}

/// Point estimate plus an optional 95% Student-t interval (absent when n < 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricCi {
    /// The metric value.
    pub value: f64,
    /// 95% confidence interval, when enough queries exist to form one.
    pub ci: Option<(f64, f64)>,
}

/// Per-stratum metric breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    /// Queries in this stratum.
    pub n: usize,
    /// Fraction ranked first.
    pub recall_at_1: f64,
    /// Fraction ranked in the top three.
    pub recall_at_3: f64,
    /// Fraction ranked in the top five.
    pub recall_at_5: f64,
    /// Mean reciprocal rank.
    pub mrr: f64,
}

/// Aggregate evaluation report over all queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Number of queries evaluated.
    pub n: usize,
    /// Identical to Recall@1 by definition.
    pub accuracy: MetricCi,
    /// Sample standard deviation of the per-query 0/1 top-1 indicator.
    pub std_dev: f64,
    /// Fraction of positives ranked first.
    pub recall_at_1: MetricCi,
    /// Fraction of positives ranked in the top three.
    pub recall_at_3: MetricCi,
    /// Fraction of positives ranked in the top five.
    pub recall_at_5: MetricCi,
    /// Mean reciprocal rank.
    pub mrr: MetricCi,
    /// Per-stratum breakdown, keyed by label, for items that carry one.
    pub strata: BTreeMap<String, StratumReport>,
}

/// 1-based rank of the positive under the selected modality's score.
///
/// A negative scoring greater than *or equal to* the positive pushes the
/// positive down one place (pessimistic ties).
pub fn rank_positive(
    scores: &[ScoreBreakdown],
    positive: usize,
    modality: Modality,
) -> Result<usize, EvalError> {
    if scores.len() != CANDIDATES {
        return Err(EvalError::CandidateCount {
            got: scores.len(),
            expected: CANDIDATES,
        });
    }
    if positive >= scores.len() {
        return Err(EvalError::PositiveOutOfRange {
            positive,
            len: scores.len(),
        });
    }
    let s_pos = modality.select(&scores[positive]);
    let displaced = scores
        .iter()
        .enumerate()
        .filter(|(i, b)| *i != positive && modality.select(b) >= s_pos)
        .count();
    Ok(1 + displaced)
}

/// Fraction of ranks that land within the top `k`.
///
/// # Panics
/// Panics if `k` is zero.
pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64, EvalError> {
    assert!(k >= 1, "recall_at_k requires k >= 1");
    if ranks.is_empty() {
        return Err(EvalError::TooFewValues {
            what: "recall_at_k",
            needed: 1,
            got: 0,
        });
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Mean reciprocal rank.
pub fn mrr(ranks: &[usize]) -> Result<f64, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::TooFewValues {
            what: "mrr",
            needed: 1,
            got: 0,
        });
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Score one item's candidates (positive first, then the negatives in order).
pub fn score_item(
    params: &EncoderParams,
    vocab: &Vocab,
    item: &EvalItem,
    weights: &EnsembleWeights,
) -> Result<Vec<ScoreBreakdown>, CoreError> {
    let q = encode(params, &tokenize(&item.query, vocab))?;
    let mut out = Vec::with_capacity(1 + item.negatives.len());
    let p = encode(params, &tokenize(&item.positive, vocab))?;
    out.push(score_pair(&q, &p, weights)?);
    for neg in &item.negatives {
        let e = encode(params, &tokenize(neg, vocab))?;
        out.push(score_pair(&q, &e, weights)?);
    }
    Ok(out)
}

/// Encode, score, and rank every item, then aggregate all metrics.
pub fn evaluate(
    params: &EncoderParams,
    vocab: &Vocab,
    items: &[EvalItem],
    weights: &EnsembleWeights,
    modality: Modality,
) -> Result<MetricsReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyTestset);
    }
    let mut results = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        if item.negatives.len() != CANDIDATES - 1 {
            return Err(EvalError::ItemShape {
                index,
                got: item.negatives.len(),
                expected: CANDIDATES - 1,
            });
        }
        let scores =
            score_item(params, vocab, item, weights).map_err(|source| EvalError::Query { index, source })?;
        let rank = rank_positive(&scores, 0, modality)?;
        results.push(RankingResult {
            rank,
            stratum: item.stratum.clone(),
        });
    }
    aggregate(&results)
}

/// Aggregate per-query ranks into a full report.
pub fn aggregate(results: &[RankingResult]) -> Result<MetricsReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyTestset);
    }
    let ranks: Vec<usize> = results.iter().map(|r| r.rank).collect();
    let top1 = indicator(&ranks, 1);
    let recall_at_1 = metric_with_ci(&top1)?;
    let recall_at_3 = metric_with_ci(&indicator(&ranks, 3))?;
    let recall_at_5 = metric_with_ci(&indicator(&ranks, 5))?;
    let reciprocal: Vec<f64> = ranks.iter().map(|&r| 1.0 / r as f64).collect();
    let mrr_ci = metric_with_ci(&reciprocal)?;

    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for r in results {
        if let Some(label) = &r.stratum {
            by_label.entry(label).or_default().push(r.rank);
        }
    }
    let mut strata = BTreeMap::new();
    for (label, stratum_ranks) in by_label {
        strata.insert(
            label.to_string(),
            StratumReport {
                n: stratum_ranks.len(),
                recall_at_1: recall_at_k(&stratum_ranks, 1)?,
                recall_at_3: recall_at_k(&stratum_ranks, 3)?,
                recall_at_5: recall_at_k(&stratum_ranks, 5)?,
                mrr: mrr(&stratum_ranks)?,
            },
        );
    }

    Ok(MetricsReport {
        n: results.len(),
        accuracy: recall_at_1,
        std_dev: sample_std(&top1),
        recall_at_1,
        recall_at_3,
        recall_at_5,
        mrr: mrr_ci,
        strata,
    })
}

fn indicator(ranks: &[usize], k: usize) -> Vec<f64> {
    ranks.iter().map(|&r| if r <= k { 1.0 } else { 0.0 }).collect()
}

fn metric_with_ci(values: &[f64]) -> Result<MetricCi, EvalError> {
    let ci = if values.len() >= 2 {
        Some(confidence_interval(values, 0.95)?)
    } else {
        None
    };
    Ok(MetricCi {
        value: mean(values),
        ci,
    })
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn ci_cell(m: &MetricCi) -> String {
            match m.ci {
                Some((lo, hi)) => format!("[{lo:.4}, {hi:.4}]"),
                None => "-".to_string(),
            }
        }
        writeln!(f, "queries: {}", self.n)?;
        writeln!(f, "{:<10} {:>8}  {:<20}", "metric", "value", "95% CI")?;
        for (name, m) in [
            ("Accuracy", &self.accuracy),
            ("Recall@1", &self.recall_at_1),
            ("Recall@3", &self.recall_at_3),
            ("Recall@5", &self.recall_at_5),
            ("MRR", &self.mrr),
        ] {
            writeln!(f, "{:<10} {:>8.4}  {:<20}", name, m.value, ci_cell(m))?;
        }
        writeln!(f, "{:<10} {:>8.4}", "StdDev", self.std_dev)?;
        for (label, s) in &self.strata {
            writeln!(
                f,
                "  [{label}] n={} R@1={:.4} R@3={:.4} R@5={:.4} MRR={:.4}",
                s.n, s.recall_at_1, s.recall_at_3, s.recall_at_5, s.mrr
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn breakdowns(dense: [f64; CANDIDATES]) -> Vec<ScoreBreakdown> {
        dense
            .iter()
            .map(|&d| ScoreBreakdown {
                dense: d,
                sparse: 0.0,
                colbert: 0.0,
                ensemble: d,
            })
            .collect()
    }

    #[test]
    fn strictly_highest_positive_ranks_first() {
        let s = breakdowns([0.9, 0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(rank_positive(&s, 0, Modality::Dense).unwrap(), 1);
    }

    #[test]
    fn tie_counts_against_the_positive() {
        let s = breakdowns([0.9, 0.9, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(rank_positive(&s, 0, Modality::Dense).unwrap(), 2);
    }

    #[test]
    fn strictly_lowest_positive_ranks_last() {
        let s = breakdowns([0.05, 0.9, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(rank_positive(&s, 0, Modality::Dense).unwrap(), 6);
    }

    #[test]
    fn modality_selector_switches_the_ranking() {
        let mut s = breakdowns([0.9, 0.1, 0.2, 0.3, 0.4, 0.5]);
        for (i, b) in s.iter_mut().enumerate() {
            // Positive beats every negative on sparse except candidate 3.
            b.sparse = match i {
                0 => 1.0,
                3 => 2.0,
                _ => 0.0,
            };
        }
        assert_eq!(rank_positive(&s, 0, Modality::Dense).unwrap(), 1);
        assert_eq!(rank_positive(&s, 0, Modality::Sparse).unwrap(), 2);
    }

    #[test]
    fn wrong_candidate_count_is_an_error() {
        let s = breakdowns([0.9, 0.1, 0.2, 0.3, 0.4, 0.5]);
        let err = rank_positive(&s[..4], 0, Modality::Dense).unwrap_err();
        assert!(matches!(err, EvalError::CandidateCount { got: 4, expected: 6 }));
    }

    #[test]
    fn out_of_range_positive_is_an_error() {
        let s = breakdowns([0.9, 0.1, 0.2, 0.3, 0.4, 0.5]);
        let err = rank_positive(&s, 6, Modality::Dense).unwrap_err();
        assert!(matches!(err, EvalError::PositiveOutOfRange { positive: 6, len: 6 }));
    }

    #[test]
    fn recall_examples() {
        assert_abs_diff_eq!(recall_at_k(&[1, 3, 5], 3).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(recall_at_k(&[1, 1, 1, 1], 4).unwrap(), 1.0);
        // k equal to the candidate count always captures everything.
        assert_eq!(recall_at_k(&[6, 5, 4, 3, 2, 1], 6).unwrap(), 1.0);
        assert!(recall_at_k(&[], 1).is_err());
    }

    #[test]
    #[should_panic(expected = "k >= 1")]
    fn recall_rejects_k_zero() {
        let _ = recall_at_k(&[1, 2], 0);
    }

    #[test]
    fn mrr_examples() {
        assert_abs_diff_eq!(mrr(&[1, 2, 4]).unwrap(), (1.0 + 0.5 + 0.25) / 3.0, epsilon = 1e-15);
        assert_eq!(mrr(&[1, 1, 1]).unwrap(), 1.0);
        assert_abs_diff_eq!(mrr(&[6]).unwrap(), 1.0 / 6.0, epsilon = 1e-15);
        assert!(mrr(&[]).is_err());
    }

    #[test]
    fn recall_is_monotone_in_k() {
        let ranks = [1, 2, 2, 3, 4, 5, 6, 6, 1, 3];
        let mut prev = 0.0;
        for k in 1..=6 {
            let r = recall_at_k(&ranks, k).unwrap();
            assert!(r >= prev, "recall@{k} = {r} dropped below recall@{} = {prev}", k - 1);
            prev = r;
        }
        assert_eq!(prev, 1.0);
    }

    #[test]
    fn mrr_bounded_by_recall_at_1_and_one() {
        let ranks = [1, 2, 2, 3, 4, 5, 6, 6, 1, 3];
        let m = mrr(&ranks).unwrap();
        let r1 = recall_at_k(&ranks, 1).unwrap();
        assert!(r1 <= m && m <= 1.0);
    }

    #[test]
    fn single_query_rank_two_report() {
        let report = aggregate(&[RankingResult {
            rank: 2,
            stratum: None,
        }])
        .unwrap();
        assert_eq!(report.n, 1);
        assert_eq!(report.recall_at_1.value, 0.0);
        assert_eq!(report.recall_at_3.value, 1.0);
        assert_abs_diff_eq!(report.mrr.value, 0.5, epsilon = 1e-15);
        assert_eq!(report.accuracy, report.recall_at_1);
        assert_eq!(report.std_dev, 0.0);
        assert!(report.recall_at_1.ci.is_none());
    }

    #[test]
    fn accuracy_always_equals_recall_at_1() {
        let results: Vec<RankingResult> = [1, 3, 2, 1, 6, 4]
            .iter()
            .map(|&rank| RankingResult { rank, stratum: None })
            .collect();
        let report = aggregate(&results).unwrap();
        assert_eq!(report.accuracy, report.recall_at_1);
        assert_abs_diff_eq!(report.recall_at_1.value, 2.0 / 6.0, epsilon = 1e-15);
        let ci = report.recall_at_1.ci.expect("n >= 2 yields a CI");
        assert!(ci.0 <= report.recall_at_1.value && report.recall_at_1.value <= ci.1);
    }

    #[test]
    fn strata_are_split_and_ordered() {
        let results = vec![
            RankingResult { rank: 1, stratum: Some("b".into()) },
            RankingResult { rank: 3, stratum: Some("a".into()) },
            RankingResult { rank: 1, stratum: Some("a".into()) },
            RankingResult { rank: 2, stratum: None },
        ];
        let report = aggregate(&results).unwrap();
        assert_eq!(report.n, 4);
        assert_eq!(report.strata.len(), 2);
        let keys: Vec<&String> = report.strata.keys().collect();
        assert_eq!(keys, ["a", "b"]);
        assert_eq!(report.strata["a"].n, 2);
        assert_abs_diff_eq!(report.strata["a"].recall_at_1, 0.5, epsilon = 1e-15);
        assert_eq!(report.strata["b"].recall_at_1, 1.0);
    }

    #[test]
    fn std_dev_matches_indicator_formula() {
        // Ranks 1,1,2,4 → indicator 1,1,0,0 → sample var = 4·(0.5)²/3 = 1/3.
        let results: Vec<RankingResult> = [1, 1, 2, 4]
            .iter()
            .map(|&rank| RankingResult { rank, stratum: None })
            .collect();
        let report = aggregate(&results).unwrap();
        assert_abs_diff_eq!(report.std_dev, (1.0f64 / 3.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn display_renders_all_metric_rows() {
        let report = aggregate(&[
            RankingResult { rank: 1, stratum: Some("s0".into()) },
            RankingResult { rank: 4, stratum: Some("s0".into()) },
        ])
        .unwrap();
        let text = report.to_string();
        for needle in ["Accuracy", "Recall@1", "Recall@3", "Recall@5", "MRR", "StdDev", "[s0]"] {
            assert!(text.contains(needle), "missing {needle} in:\n{text}");
        }
    }
}
