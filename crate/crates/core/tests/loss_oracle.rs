//! Cross-checks every loss against direct transcriptions of the formulas.
//!
//! The oracle functions below compute each definition naively (plain
//! exponentials, no shared code with the crate) and must agree with the
//! production implementations to 1e-9 over a large seeded input sweep.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use treble_core::losses::{
    cosine_distance, distill_total, final_loss, info_nce, mse_loss, primary_loss,
    self_distill_loss, similarity_matrix_loss, softmax_dist, Phase2Config,
};
use treble_core::{CandidateScores, LossConfig};

// ---------------------------------------------------------------- oracles

fn oracle_softmax(scores: &[f64], tau: f64) -> Vec<f64> {
    let z: f64 = scores.iter().map(|s| (s / tau).exp()).sum();
    scores.iter().map(|s| (s / tau).exp() / z).collect()
}

fn oracle_info_nce(scores: &[f64], positive: usize, tau: f64, eps: f64) -> f64 {
    let p = oracle_softmax(scores, tau);
    let c = scores.len() as f64;
    let mut loss = 0.0;
    for (i, pi) in p.iter().enumerate() {
        let target = if i == positive { 1.0 - eps + eps / c } else { eps / c };
        loss -= target * pi.ln();
    }
    loss
}

fn oracle_primary(s: &CandidateScores, cfg: &LossConfig) -> f64 {
    let l = |v: &[f64]| oracle_info_nce(v, s.positive, cfg.temperature, cfg.label_smoothing);
    (cfg.lambda1 * l(&s.dense) + cfg.lambda2 * l(&s.sparse) + cfg.lambda3 * l(&s.colbert)
        + l(&s.ensemble))
        / 4.0
}

fn oracle_self_distill(s: &CandidateScores, cfg: &LossConfig) -> f64 {
    let target = oracle_softmax(&s.ensemble, cfg.temperature);
    let ce = |v: &[f64]| -> f64 {
        let p = oracle_softmax(v, cfg.temperature);
        -target
            .iter()
            .zip(p.iter())
            .map(|(t, pi)| t * pi.ln().max(1e-12f64.ln()))
            .sum::<f64>()
    };
    (cfg.lambda1 * ce(&s.dense) + cfg.lambda2 * ce(&s.sparse) + cfg.lambda3 * ce(&s.colbert)) / 3.0
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

fn oracle_mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn oracle_similarity(s: &[Vec<f64>], t: &[Vec<f64>]) -> f64 {
    let b = s.len();
    let gram = |m: &[Vec<f64>], i: usize, j: usize| -> f64 {
        m[i].iter().zip(&m[j]).map(|(x, y)| x * y).sum()
    };
    let mut frob = 0.0;
    for i in 0..b {
        for j in 0..b {
            let d = gram(s, i, j) - gram(t, i, j);
            frob += d * d;
        }
    }
    frob / (b * b) as f64
}

// ------------------------------------------------------------ generators

fn random_scores(rng: &mut ChaCha8Rng) -> CandidateScores {
    let len = rng.random_range(2..=8);
    let col = |r: &mut ChaCha8Rng| -> Vec<f64> {
        (0..len).map(|_| r.random_range(-2.0..2.0)).collect()
    };
    CandidateScores {
        dense: col(rng),
        sparse: col(rng),
        colbert: col(rng),
        ensemble: col(rng),
        positive: rng.random_range(0..len),
    }
}

fn random_config(rng: &mut ChaCha8Rng) -> LossConfig {
    LossConfig {
        temperature: rng.random_range(0.05..1.0),
        label_smoothing: rng.random_range(0.0..0.5),
        lambda1: rng.random_range(0.0..2.0),
        lambda2: rng.random_range(0.0..2.0),
        lambda3: rng.random_range(0.0..2.0),
        ..LossConfig::default()
    }
}

// ----------------------------------------------------------------- tests

#[test]
fn softmax_matches_naive_exponentials() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..500 {
        let len = rng.random_range(1..=10);
        let scores: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
        let tau = rng.random_range(0.05..2.0);
        let a = softmax_dist(&scores, tau);
        let b = oracle_softmax(&scores, tau);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}

#[test]
fn info_nce_matches_oracle_over_seeded_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..1000 {
        let len = rng.random_range(2..=8);
        let scores: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
        let positive = rng.random_range(0..len);
        let tau = rng.random_range(0.05..1.0);
        let eps = rng.random_range(0.0..0.5);
        let got = info_nce(&scores, positive, tau, eps);
        let want = oracle_info_nce(&scores, positive, tau, eps);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn phase1_losses_match_oracle_over_seeded_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..1000 {
        let cfg = random_config(&mut rng);
        let scores = random_scores(&mut rng);
        let primary = primary_loss(&scores, &cfg);
        let distill = self_distill_loss(&scores, &cfg);
        let combined = final_loss(&scores, &cfg);
        let want_primary = oracle_primary(&scores, &cfg);
        let want_distill = oracle_self_distill(&scores, &cfg);
        assert!((primary.total - want_primary).abs() < 1e-9);
        assert!((distill.total - want_distill).abs() < 1e-9);
        assert!((combined.total - (want_primary + want_distill) / 2.0).abs() < 1e-9);
    }
}

#[test]
fn self_distill_uniform_anchor_value() {
    // Six tied candidates: every distribution is uniform, each modality's
    // cross-entropy is ln 6, and the default weighting gives 0.7·ln 6.
    let scores = CandidateScores {
        dense: vec![0.1; 6],
        sparse: vec![0.1; 6],
        colbert: vec![0.1; 6],
        ensemble: vec![0.1; 6],
        positive: 0,
    };
    let r = self_distill_loss(&scores, &LossConfig::default());
    let expected = 0.7 * 6f64.ln();
    assert!((r.total - expected).abs() < 1e-12);
    assert!((r.total - 1.254_231_6).abs() < 1e-6);
}

#[test]
fn primary_uniform_anchor_value() {
    // Same tied setup: every InfoNCE term is ln 6, so the weighted mean is
    // (1.0 + 0.1 + 1.0 + 1.0)/4 · ln 6.
    let scores = CandidateScores {
        dense: vec![0.1; 6],
        sparse: vec![0.1; 6],
        colbert: vec![0.1; 6],
        ensemble: vec![0.1; 6],
        positive: 0,
    };
    let r = primary_loss(&scores, &LossConfig::default());
    assert!((r.total - 3.1 / 4.0 * 6f64.ln()).abs() < 1e-12);
}

#[test]
fn phase2_losses_match_oracle_over_seeded_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..500 {
        let b = rng.random_range(1..=6);
        let d = rng.random_range(2..=8);
        let gen = |r: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..b)
                .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0) + 0.1).collect())
                .collect()
        };
        let s_rows = gen(&mut rng);
        let t_rows = gen(&mut rng);
        let to_mat = |rows: &[Vec<f64>]| {
            Array2::from_shape_fn((b, d), |(i, j)| rows[i][j])
        };
        let s = to_mat(&s_rows);
        let t = to_mat(&t_rows);

        let sim = similarity_matrix_loss(&s, &t).unwrap();
        assert!((sim - oracle_similarity(&s_rows, &t_rows)).abs() < 1e-9);

        let a = Array1::from_vec(s_rows[0].clone());
        let c = Array1::from_vec(t_rows[0].clone());
        // rows are offset by +0.1 on every coordinate, so zero vectors are
        // vanishingly unlikely but guard anyway
        if a.dot(&a) > 0.0 && c.dot(&c) > 0.0 {
            let cos = cosine_distance(&a, &c).unwrap();
            assert!((cos - oracle_cosine(&s_rows[0], &t_rows[0])).abs() < 1e-9);
        }
        let mse = mse_loss(&a, &c).unwrap();
        assert!((mse - oracle_mse(&s_rows[0], &t_rows[0])).abs() < 1e-9);

        let cfg = Phase2Config {
            alpha1: rng.random_range(0.0..2.0),
            alpha2: rng.random_range(0.0..2.0),
            alpha3: rng.random_range(0.0..2.0),
        };
        let total = distill_total(0.3, 0.5, sim, &cfg);
        let want = cfg.alpha1 * 0.3 + cfg.alpha2 * 0.5 + cfg.alpha3 * sim;
        assert!((total - want).abs() < 1e-12);
    }
}
