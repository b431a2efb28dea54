//! Evaluation protocol: ranking metrics, statistics, and fold splitting.
//!
//! Every query is ranked against its positive and five negatives under a
//! selectable score modality, with pessimistic tie-breaking. Aggregates come
//! with Student-t confidence intervals and per-stratum breakdowns; paired
//! t-tests (with Bonferroni correction) and Cohen's d compare systems.

pub mod error;
pub mod kfold;
pub mod metrics;
pub mod stats;

pub use error::EvalError;
pub use kfold::{stratified_kfold, KfoldSplit};
pub use metrics::{
    aggregate, evaluate, mrr, rank_positive, recall_at_k, score_item, EvalItem, MetricCi,
    MetricsReport, RankingResult, StratumReport, CANDIDATES,
};
pub use stats::{bonferroni, cohens_d, confidence_interval, paired_t_test, PairedTTest};
