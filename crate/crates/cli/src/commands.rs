//! Subcommand implementations.
//!
//! Every command works against a single output directory (`--out`) with
//! fixed artifact names, so a full pipeline is a sequence of invocations
//! over one directory: `gen-synthetic` seeds it, `train` / `distill`
//! produce checkpoints, and the evaluation commands read whichever
//! checkpoint is most refined. Existing artifacts are never clobbered
//! unless `--overwrite` is passed; with it, an identical invocation
//! rewrites identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use treble_core::checkpoint::{self, Checkpoint};
use treble_core::encoder::encode;
use treble_core::gradcheck::{phase1_gradient_check, phase2_gradient_check, FdOptions, GradCheckReport};
use treble_core::objective::{Phase1Example, Phase2Batch};
use treble_core::vocab::tokenize;
use treble_core::{EncoderParams, LossConfig, Modality, Vocab};
use treble_eval::{evaluate, MetricsReport};
use treble_index::HnswIndex;
use treble_rag::{rag_evaluate_with, ingest_notes, NoteRecord, RagQuery};
use treble_train::{train_phase1, train_phase2, Dataset};

use crate::config::{CliConfig, VALIDATION_FRACTION};
use crate::dataset::{
    guard_overwrite, load_distill, load_eval_items, load_triplets, read_jsonl, write_json,
    write_jsonl, TextLine,
};
use crate::error::CliError;
use crate::synth;

/// Training triplets.
pub const TRAIN_FILE: &str = "train.jsonl";
/// Held-out evaluation triplets.
pub const TEST_FILE: &str = "test.jsonl";
/// Distillation curriculum records.
pub const DISTILL_FILE: &str = "distill.jsonl";
/// Indexable passages, one id per line.
pub const PASSAGES_FILE: &str = "passages.jsonl";
/// Index queries, one id per line.
pub const QUERIES_FILE: &str = "queries.jsonl";
/// Category-tagged notes for the retrieval pipeline.
pub const RAG_NOTES_FILE: &str = "rag_notes.jsonl";
/// Note-retrieval queries with gold categories.
pub const RAG_QUERIES_FILE: &str = "rag_queries.jsonl";
/// Phase-1 checkpoint.
pub const MODEL_FILE: &str = "model.ckpt";
/// Phase-2 (distilled) checkpoint.
pub const STUDENT_FILE: &str = "student.ckpt";
/// Phase-1 step/eval log.
pub const TRAIN_LOG_FILE: &str = "trainlog.jsonl";
/// Phase-1 run summary.
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
/// Phase-2 step log.
pub const DISTILL_LOG_FILE: &str = "distill_log.jsonl";
/// Phase-2 run summary.
pub const DISTILL_REPORT_FILE: &str = "distill_report.json";
/// Evaluation metrics.
pub const METRICS_FILE: &str = "metrics.json";
/// Serialized vector index over the passages.
pub const INDEX_FILE: &str = "index.hnsw";
/// Per-query nearest neighbors.
pub const NEIGHBORS_FILE: &str = "neighbors.jsonl";
/// Note-retrieval evaluation report.
pub const RAG_REPORT_FILE: &str = "rag_report.json";
/// Gradient-check summary.
pub const GRADCHECK_FILE: &str = "gradcheck.json";

/// Gradient-check pass bar.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Neighbors returned per index query when `--k` is absent.
pub const DEFAULT_INDEX_K: usize = 10;

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct CommonOpts {
    /// TOML config path; defaults apply when absent.
    pub config: Option<PathBuf>,
    /// Seed override (meaning varies by command; see each).
    pub seed: Option<u64>,
    /// Artifact directory.
    pub out: PathBuf,
    /// Replace existing artifacts instead of refusing.
    pub overwrite: bool,
}

impl CommonOpts {
    fn load_config(&self) -> Result<CliConfig, CliError> {
        CliConfig::load(self.config.as_deref())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Check the overwrite guard for every target, then make sure the
    /// directory exists.
    fn prepare_outputs(&self, names: &[&str]) -> Result<(), CliError> {
        for name in names {
            guard_overwrite(&self.path(name), self.overwrite)?;
        }
        fs::create_dir_all(&self.out).map_err(|e| CliError::at(&self.out, e))?;
        Ok(())
    }
}

/// The most refined checkpoint available: the distilled student when one
/// exists, otherwise the phase-1 model.
fn load_best_checkpoint(opts: &CommonOpts) -> Result<(Checkpoint, &'static str), CliError> {
    for name in [STUDENT_FILE, MODEL_FILE] {
        let path = opts.path(name);
        if path.exists() {
            return Ok((checkpoint::load(&path)?, name));
        }
    }
    Err(CliError::Data(format!(
        "no checkpoint in {}; run `treble train` first",
        opts.out.display()
    )))
}

fn load_required(path: &Path) -> Result<Checkpoint, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!(
            "missing checkpoint {}; run `treble train` first",
            path.display()
        )));
    }
    Ok(checkpoint::load(path)?)
}

/// `gen-synthetic`: write the seeded corpus into the output directory.
/// `--seed` overrides the spec's seed.
pub fn gen_synthetic(opts: &CommonOpts) -> Result<(), CliError> {
    let config = opts.load_config()?;
    let mut spec = config.synthetic;
    if let Some(seed) = opts.seed {
        spec.seed = seed;
    }
    let corpus = synth::gen_synthetic(&spec)?;
    opts.prepare_outputs(&[
        TRAIN_FILE,
        TEST_FILE,
        DISTILL_FILE,
        PASSAGES_FILE,
        QUERIES_FILE,
        RAG_NOTES_FILE,
        RAG_QUERIES_FILE,
    ])?;
    write_jsonl(&opts.path(TRAIN_FILE), &corpus.train)?;
    write_jsonl(&opts.path(TEST_FILE), &corpus.test)?;
    write_jsonl(&opts.path(DISTILL_FILE), &corpus.distill)?;
    write_jsonl(&opts.path(PASSAGES_FILE), &corpus.passages)?;
    write_jsonl(&opts.path(QUERIES_FILE), &corpus.queries)?;
    write_jsonl(&opts.path(RAG_NOTES_FILE), &corpus.notes)?;
    write_jsonl(&opts.path(RAG_QUERIES_FILE), &corpus.rag_queries)?;
    println!(
        "generated {} train / {} test triplets, {} distill texts, {} passages, {} notes -> {}",
        corpus.train.len(),
        corpus.test.len(),
        corpus.distill.len(),
        corpus.passages.len(),
        corpus.notes.len(),
        opts.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    train_examples: usize,
    validation_examples: usize,
    steps_run: usize,
    stopped_early: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_val_recall1: Option<f64>,
    final_loss: f64,
    checkpoint_digest: &'a str,
}

/// Trailing slice of the triplet file held out for validation.
fn validation_count(n: usize) -> usize {
    ((n as f64 * VALIDATION_FRACTION).round() as usize).min(n.saturating_sub(1))
}

/// `train`: phase-1 contrastive training over `train.jsonl`. `--seed`
/// overrides both the encoder-init and batching seeds.
pub fn train(opts: &CommonOpts) -> Result<(), CliError> {
    let config = opts.load_config()?;
    let triplets = load_triplets(&opts.path(TRAIN_FILE))?;
    let n_val = validation_count(triplets.len());
    let split = triplets.len() - n_val;
    let data = Dataset {
        train: triplets[..split].to_vec(),
        validation: triplets[split..].to_vec(),
    };

    let texts = data.train.iter().chain(&data.validation).flat_map(|t| {
        std::iter::once(t.query.as_str())
            .chain(std::iter::once(t.positive.as_str()))
            .chain(t.negatives.iter().map(String::as_str))
    });
    let vocab = Vocab::build(texts);

    let mut enc_cfg = config.encoder;
    enc_cfg.vocab_size = vocab.len();
    let mut train_cfg = config.train;
    if let Some(seed) = opts.seed {
        enc_cfg.seed = seed;
        train_cfg.seed = seed;
    }

    opts.prepare_outputs(&[MODEL_FILE, TRAIN_LOG_FILE, TRAIN_REPORT_FILE])?;
    let params = EncoderParams::init(&enc_cfg)?;
    let outcome = train_phase1(params, &vocab, &data, &train_cfg)?;

    let model_path = opts.path(MODEL_FILE);
    checkpoint::save(&model_path, &outcome.params, &vocab)?;
    let digest = checkpoint::digest(&outcome.params, &vocab)?;
    fs::write(opts.path(TRAIN_LOG_FILE), outcome.log.to_jsonl())
        .map_err(|e| CliError::at(&opts.path(TRAIN_LOG_FILE), e))?;
    let final_loss = outcome.log.steps.last().map_or(f64::NAN, |s| s.loss.total());
    write_json(
        &opts.path(TRAIN_REPORT_FILE),
        &TrainSummary {
            train_examples: data.train.len(),
            validation_examples: data.validation.len(),
            steps_run: outcome.steps_run,
            stopped_early: outcome.stopped_early,
            best_val_recall1: outcome.best_val_recall1,
            final_loss,
            checkpoint_digest: &digest,
        },
    )?;
    println!(
        "trained {} steps on {} examples ({} validation); final loss {:.6} -> {}",
        outcome.steps_run,
        data.train.len(),
        data.validation.len(),
        final_loss,
        model_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct DistillSummary<'a> {
    texts: usize,
    steps_run: usize,
    first_loss: f64,
    final_loss: f64,
    loss_drop_fraction: f64,
    teacher_digest: &'a str,
    student_digest: &'a str,
}

/// `distill`: phase-2 teacher distillation of a fresh student. The teacher
/// is `model.ckpt`; `--seed` sets the student init seed (defaults to the
/// teacher's seed + 1).
pub fn distill(opts: &CommonOpts) -> Result<(), CliError> {
    let config = opts.load_config()?;
    let teacher = load_required(&opts.path(MODEL_FILE))?;
    let texts = load_distill(&opts.path(DISTILL_FILE))?;

    let mut student_cfg = teacher.params.config.clone();
    student_cfg.seed = opts.seed.unwrap_or(student_cfg.seed.wrapping_add(1));

    opts.prepare_outputs(&[STUDENT_FILE, DISTILL_LOG_FILE, DISTILL_REPORT_FILE])?;
    let student = EncoderParams::init(&student_cfg)?;
    let outcome = train_phase2(student, &teacher.params, &teacher.vocab, &texts, &config.distill)?;

    let student_path = opts.path(STUDENT_FILE);
    checkpoint::save(&student_path, &outcome.params, &teacher.vocab)?;
    let student_digest = checkpoint::digest(&outcome.params, &teacher.vocab)?;
    fs::write(opts.path(DISTILL_LOG_FILE), outcome.log.to_jsonl())
        .map_err(|e| CliError::at(&opts.path(DISTILL_LOG_FILE), e))?;
    let first_loss = outcome.log.steps.first().map_or(f64::NAN, |s| s.loss.total());
    let final_loss = outcome.log.steps.last().map_or(f64::NAN, |s| s.loss.total());
    let drop = if first_loss > 0.0 {
        (first_loss - final_loss) / first_loss
    } else {
        0.0
    };
    write_json(
        &opts.path(DISTILL_REPORT_FILE),
        &DistillSummary {
            texts: texts.len(),
            steps_run: outcome.steps_run,
            first_loss,
            final_loss,
            loss_drop_fraction: drop,
            teacher_digest: &outcome.teacher_digest,
            student_digest: &student_digest,
        },
    )?;
    println!(
        "distilled {} steps over {} texts; loss {:.6} -> {:.6} ({:.1}% drop) -> {}",
        outcome.steps_run,
        texts.len(),
        first_loss,
        final_loss,
        drop * 100.0,
        student_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    modality: Modality,
    checkpoint: &'a str,
    metrics: &'a MetricsReport,
}

/// `eval`: ranking metrics on `test.jsonl` under the chosen modality,
/// using the most refined checkpoint available.
pub fn eval(opts: &CommonOpts, modality: Modality) -> Result<(), CliError> {
    let config = opts.load_config()?;
    let (ckpt, source) = load_best_checkpoint(opts)?;
    let items = load_eval_items(&opts.path(TEST_FILE))?;
    opts.prepare_outputs(&[METRICS_FILE])?;
    let report = evaluate(&ckpt.params, &ckpt.vocab, &items, &config.train.weights, modality)?;
    write_json(
        &opts.path(METRICS_FILE),
        &EvalSummary {
            modality,
            checkpoint: source,
            metrics: &report,
        },
    )?;
    println!("evaluating {source} with modality {modality:?}");
    print!("{report}");
    Ok(())
}

/// `index-build`: encode `passages.jsonl` and build the vector index.
/// `--seed` overrides the index construction seed.
pub fn index_build(opts: &CommonOpts) -> Result<(), CliError> {
    let config = opts.load_config()?;
    let (ckpt, source) = load_best_checkpoint(opts)?;
    let passages: Vec<TextLine> = read_jsonl(&opts.path(PASSAGES_FILE))?;
    if passages.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds no passages",
            opts.path(PASSAGES_FILE).display()
        )));
    }
    let mut index_cfg = config.index;
    if let Some(seed) = opts.seed {
        index_cfg.seed = seed;
    }
    opts.prepare_outputs(&[INDEX_FILE])?;
    let mut items = Vec::with_capacity(passages.len());
    for line in &passages {
        let repr = encode(&ckpt.params, &tokenize(&line.text, &ckpt.vocab))?;
        let dense: Vec<f32> = repr.dense.iter().map(|&v| v as f32).collect();
        items.push((line.id, dense));
    }
    let dim = ckpt.params.config.dim;
    let index = HnswIndex::build(dim, index_cfg, items)?;
    index.save(&opts.path(INDEX_FILE))?;
    println!(
        "indexed {} passages (dim {dim}, encoder {source}) -> {}",
        index.len(),
        opts.path(INDEX_FILE).display()
    );
    Ok(())
}

#[derive(Serialize)]
struct NeighborLine {
    id: u32,
    neighbors: Vec<treble_index::Neighbor>,
}

/// `index-query`: nearest neighbors for each query in `queries.jsonl`.
/// The index stores dense embeddings, so only `--modality dense` is valid.
pub fn index_query(opts: &CommonOpts, modality: Modality, k: Option<usize>) -> Result<(), CliError> {
    if modality != Modality::Dense {
        return Err(CliError::Usage(format!(
            "the index stores dense embeddings; --modality {} is not supported here",
            format!("{modality:?}").to_lowercase()
        )));
    }
    let k = k.unwrap_or(DEFAULT_INDEX_K);
    if k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let (ckpt, _) = load_best_checkpoint(opts)?;
    let index_path = opts.path(INDEX_FILE);
    if !index_path.exists() {
        return Err(CliError::Data(format!(
            "missing index {}; run `treble index-build` first",
            index_path.display()
        )));
    }
    let index = HnswIndex::load(&index_path)?;
    if index.dim() != ckpt.params.config.dim {
        return Err(CliError::Data(format!(
            "index dim {} does not match encoder dim {}",
            index.dim(),
            ckpt.params.config.dim
        )));
    }
    let queries: Vec<TextLine> = read_jsonl(&opts.path(QUERIES_FILE))?;
    opts.prepare_outputs(&[NEIGHBORS_FILE])?;
    let mut lines = Vec::with_capacity(queries.len());
    for query in &queries {
        let repr = encode(&ckpt.params, &tokenize(&query.text, &ckpt.vocab))?;
        let dense: Vec<f32> = repr.dense.iter().map(|&v| v as f32).collect();
        lines.push(NeighborLine {
            id: query.id,
            neighbors: index.search(&dense, k)?,
        });
    }
    write_jsonl(&opts.path(NEIGHBORS_FILE), &lines)?;
    println!(
        "answered {} queries (k = {k}) -> {}",
        lines.len(),
        opts.path(NEIGHBORS_FILE).display()
    );
    Ok(())
}

/// `rag-eval`: chunk and index `rag_notes.jsonl`, answer
/// `rag_queries.jsonl`, and report category IoU. Non-dense modalities
/// re-rank a widened dense candidate pool.
pub fn rag_eval(opts: &CommonOpts, modality: Modality, k: Option<usize>) -> Result<(), CliError> {
    let config = opts.load_config()?;
    let (ckpt, source) = load_best_checkpoint(opts)?;
    let notes: Vec<NoteRecord> = read_jsonl(&opts.path(RAG_NOTES_FILE))?;
    let queries: Vec<RagQuery> = read_jsonl(&opts.path(RAG_QUERIES_FILE))?;
    let k = k.unwrap_or(config.rag.k);
    if k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    opts.prepare_outputs(&[RAG_REPORT_FILE])?;
    let store = ingest_notes(&notes, &ckpt.params, &ckpt.vocab, &config.rag.ingest())?;
    let rerank = match modality {
        Modality::Dense => None,
        other => Some(other),
    };
    let report = rag_evaluate_with(&store, &ckpt.params, &ckpt.vocab, &queries, k, rerank)?;
    write_json(&opts.path(RAG_REPORT_FILE), &report)?;
    println!(
        "retrieval over {} chunks from {} notes (encoder {source})",
        store.chunk_count(),
        notes.len()
    );
    print!("{report}");
    Ok(())
}

#[derive(Serialize)]
struct PhaseCheck {
    checked: usize,
    max_rel_err: f64,
    worst_tensor: String,
    pass: bool,
}

impl PhaseCheck {
    fn from_report(report: &GradCheckReport, tol: f64) -> Self {
        Self {
            checked: report.checked,
            max_rel_err: report.max_rel_err,
            worst_tensor: report.worst_tensor.clone(),
            pass: report.passes(tol),
        }
    }
}

#[derive(Serialize)]
struct GradCheckSummary {
    tolerance: f64,
    phase1: PhaseCheck,
    phase2: PhaseCheck,
    pass: bool,
}

/// `grad-check`: sweep every parameter coordinate of a small encoder
/// against central finite differences for both phase objectives. `--seed`
/// varies the probe parameters.
pub fn grad_check(opts: &CommonOpts) -> Result<(), CliError> {
    let seed = opts.seed.unwrap_or(0);
    let sample_texts = [
        "alpha beta",
        "gamma delta",
        "epsilon zeta",
        "eta theta",
        "alpha gamma epsilon",
        "beta delta zeta",
        "theta alpha",
    ];
    let vocab = Vocab::build(sample_texts.iter().copied());
    let enc_cfg = treble_core::EncoderConfig {
        dim: 6,
        layers: 1,
        heads: 2,
        max_seq_len: 8,
        vocab_size: vocab.len(),
        seed,
    };
    let params = EncoderParams::init(&enc_cfg)?;
    let opts_fd = FdOptions {
        samples_per_tensor: 0, // every coordinate
        ..FdOptions::default()
    };

    let example = Phase1Example {
        query: tokenize(sample_texts[0], &vocab),
        candidates: sample_texts[1..].iter().map(|t| tokenize(t, &vocab)).collect(),
        positive: 0,
    };
    let phase1 = phase1_gradient_check(&params, &example, &LossConfig::default(), &opts_fd)?;

    let teacher_cfg = treble_core::EncoderConfig {
        seed: seed.wrapping_add(1),
        ..enc_cfg
    };
    let teacher = EncoderParams::init(&teacher_cfg)?;
    let batch_texts = ["alpha beta gamma", "delta epsilon", "zeta eta theta"];
    let seqs: Vec<_> = batch_texts.iter().map(|t| tokenize(t, &vocab)).collect();
    let mut teacher_dense = ndarray::Array2::zeros((seqs.len(), enc_cfg.dim));
    for (i, seq) in seqs.iter().enumerate() {
        teacher_dense
            .row_mut(i)
            .assign(&encode(&teacher, seq)?.dense);
    }
    let batch = Phase2Batch {
        texts: seqs,
        teacher_dense,
    };
    let phase2 = phase2_gradient_check(
        &params,
        &batch,
        &treble_core::losses::Phase2Config::default(),
        &opts_fd,
    )?;

    opts.prepare_outputs(&[GRADCHECK_FILE])?;
    let summary = GradCheckSummary {
        tolerance: GRADCHECK_TOLERANCE,
        phase1: PhaseCheck::from_report(&phase1, GRADCHECK_TOLERANCE),
        phase2: PhaseCheck::from_report(&phase2, GRADCHECK_TOLERANCE),
        pass: phase1.passes(GRADCHECK_TOLERANCE) && phase2.passes(GRADCHECK_TOLERANCE),
    };
    write_json(&opts.path(GRADCHECK_FILE), &summary)?;
    println!(
        "phase 1: {} coordinates, max relative error {:.3e}",
        summary.phase1.checked, summary.phase1.max_rel_err
    );
    println!(
        "phase 2: {} coordinates, max relative error {:.3e}",
        summary.phase2.checked, summary.phase2.max_rel_err
    );
    if !summary.pass {
        return Err(CliError::Numeric(format!(
            "gradient check failed: phase 1 {:.3e}, phase 2 {:.3e} exceed tolerance {GRADCHECK_TOLERANCE:.0e}",
            summary.phase1.max_rel_err, summary.phase2.max_rel_err
        )));
    }
    println!("max relative error < {GRADCHECK_TOLERANCE:.0e}");
    Ok(())
}
