//! Finite-difference validation of the analytic gradients.
//!
//! Central differences with h = 1e-5 must agree with the backward pass to
//! a relative error below 1e-4 on every probed coordinate. The phase-1
//! probes hold the self-distillation target frozen at the expansion point,
//! matching the stop-gradient in the objective.

use ndarray::Array2;

use treble_core::encoder::encode;
use treble_core::gradcheck::{
    finite_difference_check, phase1_gradient_check, phase2_gradient_check, FdOptions,
};
use treble_core::objective::{phase1_grads, phase1_value, Phase1Example, Phase2Batch};
use treble_core::vocab::{tokenize, Vocab};
use treble_core::{EncoderConfig, EncoderParams, GradientSet, LossConfig};
use treble_core::losses::Phase2Config;

const TOL: f64 = 1e-4;

fn vocab() -> Vocab {
    Vocab::build([
        "microglia prune weak synapses during development",
        "oligodendrocytes wrap axons in myelin sheaths",
        "purkinje cells inhibit deep cerebellar nuclei",
        "place cells fire at specific spatial locations",
    ])
}

fn params(seed: u64, dim: usize, layers: usize) -> EncoderParams {
    let v = vocab();
    EncoderParams::init(&EncoderConfig {
        dim,
        layers,
        heads: 2,
        max_seq_len: 32,
        vocab_size: v.len(),
        seed,
    })
    .unwrap()
}

fn example(v: &Vocab) -> Phase1Example {
    Phase1Example {
        query: tokenize("synapses during development", v),
        candidates: vec![
            tokenize("microglia prune weak synapses during development", v),
            tokenize("oligodendrocytes wrap axons in myelin sheaths", v),
            tokenize("purkinje cells inhibit deep cerebellar nuclei", v),
        ],
        positive: 0,
    }
}

#[test]
fn phase1_exhaustive_single_layer() {
    // Every coordinate of every tensor, one transformer block.
    let v = vocab();
    let report = phase1_gradient_check(
        &params(41, 6, 1),
        &example(&v),
        &LossConfig::default(),
        &FdOptions {
            samples_per_tensor: 0,
            ..FdOptions::default()
        },
    )
    .unwrap();
    assert!(
        report.passes(TOL),
        "worst rel err {} at {}[{}]: analytic {} vs numeric {}",
        report.max_rel_err,
        report.worst_tensor,
        report.worst_index,
        report.worst_analytic,
        report.worst_numeric
    );
    assert!(report.checked > 500, "probe count {}", report.checked);
}

#[test]
fn phase1_sampled_two_layers_across_seeds() {
    let v = vocab();
    for seed in [1, 2, 3] {
        let report = phase1_gradient_check(
            &params(seed, 8, 2),
            &example(&v),
            &LossConfig::default(),
            &FdOptions {
                samples_per_tensor: 4,
                seed,
                ..FdOptions::default()
            },
        )
        .unwrap();
        assert!(
            report.passes(TOL),
            "seed {seed}: worst rel err {} at {}[{}]",
            report.max_rel_err,
            report.worst_tensor,
            report.worst_index,
        );
    }
}

#[test]
fn phase1_sampled_with_nondefault_loss_config() {
    let v = vocab();
    let cfg = LossConfig {
        temperature: 0.2,
        label_smoothing: 0.0,
        lambda1: 0.5,
        lambda2: 1.5,
        lambda3: 0.25,
        ..LossConfig::default()
    };
    let report = phase1_gradient_check(
        &params(12, 8, 1),
        &example(&v),
        &cfg,
        &FdOptions {
            samples_per_tensor: 5,
            ..FdOptions::default()
        },
    )
    .unwrap();
    assert!(report.passes(TOL), "worst {}", report.max_rel_err);
}

#[test]
fn phase1_duplicate_tokens_exercise_max_collapse() {
    // Repeated tokens route sparse gradients through the max-occurrence
    // rule and late-interaction argmax ties; the backward pass must agree
    // with finite differences there too.
    let v = vocab();
    let ex = Phase1Example {
        query: tokenize("synapses synapses myelin", &v),
        candidates: vec![
            tokenize("microglia prune weak synapses synapses", &v),
            tokenize("purkinje cells inhibit nuclei", &v),
        ],
        positive: 0,
    };
    let report = phase1_gradient_check(
        &params(9, 8, 1),
        &ex,
        &LossConfig::default(),
        &FdOptions {
            samples_per_tensor: 6,
            ..FdOptions::default()
        },
    )
    .unwrap();
    assert!(report.passes(TOL), "worst {}", report.max_rel_err);
}

#[test]
fn phase1_live_target_disagrees_with_stop_gradient() {
    // Differentiating straight through the distillation target (no stop
    // gradient) is a different function. Finite differences of that live
    // objective must NOT match the analytic gradients, which is exactly the
    // asymmetry the frozen-target value function exists to remove.
    let v = vocab();
    let p = params(41, 6, 1);
    let ex = example(&v);
    let cfg = LossConfig::default();
    let mut analytic = GradientSet::zeros(&p.config);
    phase1_grads(&p, &ex, &cfg, &mut analytic).unwrap();
    let live = finite_difference_check(
        &p,
        &analytic,
        &FdOptions {
            samples_per_tensor: 0,
            ..FdOptions::default()
        },
        |q| phase1_value(q, &ex, &cfg).map(|r| r.total),
    )
    .unwrap();
    assert!(
        !live.passes(TOL),
        "live-target probes unexpectedly matched: {}",
        live.max_rel_err
    );
}

#[test]
fn phase2_exhaustive_single_layer() {
    let v = vocab();
    let student = params(6, 6, 1);
    let teacher = params(60, 6, 1);
    let texts = vec![
        tokenize("microglia prune weak synapses", &v),
        tokenize("place cells fire at locations", &v),
        tokenize("axons in myelin", &v),
    ];
    let mut teacher_dense = Array2::zeros((texts.len(), student.config.dim));
    for (i, t) in texts.iter().enumerate() {
        teacher_dense
            .row_mut(i)
            .assign(&encode(&teacher, t).unwrap().dense);
    }
    let batch = Phase2Batch {
        texts,
        teacher_dense,
    };
    let report = phase2_gradient_check(
        &student,
        &batch,
        &Phase2Config::default(),
        &FdOptions {
            samples_per_tensor: 0,
            ..FdOptions::default()
        },
    )
    .unwrap();
    assert!(
        report.passes(TOL),
        "worst rel err {} at {}[{}]: analytic {} vs numeric {}",
        report.max_rel_err,
        report.worst_tensor,
        report.worst_index,
        report.worst_analytic,
        report.worst_numeric
    );
}

#[test]
fn phase2_sampled_weighted_terms() {
    let v = vocab();
    let student = params(14, 8, 2);
    let teacher = params(140, 8, 2);
    let texts = vec![
        tokenize("oligodendrocytes wrap axons", &v),
        tokenize("purkinje cells inhibit deep nuclei", &v),
    ];
    let mut teacher_dense = Array2::zeros((texts.len(), 8));
    for (i, t) in texts.iter().enumerate() {
        teacher_dense
            .row_mut(i)
            .assign(&encode(&teacher, t).unwrap().dense);
    }
    let batch = Phase2Batch {
        texts,
        teacher_dense,
    };
    let cfg = Phase2Config {
        alpha1: 0.3,
        alpha2: 2.0,
        alpha3: 0.7,
    };
    let report = phase2_gradient_check(
        &student,
        &batch,
        &cfg,
        &FdOptions {
            samples_per_tensor: 4,
            ..FdOptions::default()
        },
    )
    .unwrap();
    assert!(report.passes(TOL), "worst {}", report.max_rel_err);
}
