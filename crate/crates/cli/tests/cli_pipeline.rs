//! End-to-end tests of the `treble` binary: full pipeline over a tiny
//! corpus, exit-code contract, overwrite refusal, and seeded determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn treble() -> Command {
    Command::new(env!("CARGO_BIN_EXE_treble"))
}

fn run(args: &[&str]) -> Output {
    treble().args(args).output().expect("spawn treble")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed ({:?}):\n{}{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY_CONFIG: &str = r#"
[encoder]
dim = 16
layers = 1
heads = 2
max_seq_len = 32

[train]
epochs = 2
batch_size = 4

[train.schedule]
lr_max = 0.05

[distill]
epochs = 2
batch_size = 4

[distill.schedule]
lr_max = 0.05

[rag]
max_tokens = 24
k = 3

[synthetic]
concepts = 12
clusters = 3
vocab_size = 80
train_triplets = 24
test_triplets = 12
distill_texts = 12
rag_patients = 2
rag_queries = 6
"#;

fn write_config(dir: &Path) -> String {
    let path = dir.join("treble.toml");
    fs::write(&path, TINY_CONFIG).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn full_pipeline_runs_clean_on_a_tiny_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let base = ["--config", config.as_str(), "--out", out_s, "--seed", "11"];

    let gen = run(&[&["gen-synthetic"], &base[..]].concat());
    assert_ok(&gen, "gen-synthetic");
    for name in [
        "train.jsonl",
        "test.jsonl",
        "distill.jsonl",
        "passages.jsonl",
        "queries.jsonl",
        "rag_notes.jsonl",
        "rag_queries.jsonl",
    ] {
        assert!(out.join(name).exists(), "missing artifact {name}");
    }

    assert_ok(&run(&[&["train"], &base[..]].concat()), "train");
    assert!(out.join("model.ckpt").exists());
    assert!(out.join("trainlog.jsonl").exists());

    assert_ok(&run(&[&["distill"], &base[..]].concat()), "distill");
    assert!(out.join("student.ckpt").exists());

    let eval = run(&[&["eval"], &base[..], &["--modality", "ensemble"]].concat());
    assert_ok(&eval, "eval");
    let eval_stdout = String::from_utf8_lossy(&eval.stdout);
    assert!(eval_stdout.contains("evaluating student.ckpt"), "{eval_stdout}");
    assert!(eval_stdout.contains("Recall@1"), "{eval_stdout}");

    assert_ok(&run(&[&["index-build"], &base[..]].concat()), "index-build");
    assert!(out.join("index.hnsw").exists());

    let query = run(&[&["index-query"], &base[..], &["--k", "3"]].concat());
    assert_ok(&query, "index-query");
    let neighbors = fs::read_to_string(out.join("neighbors.jsonl")).unwrap();
    assert_eq!(neighbors.lines().count(), 12); // one line per passage query
    for line in neighbors.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["neighbors"].as_array().unwrap().len(), 3);
    }

    let rag = run(&[&["rag-eval"], &base[..]].concat());
    assert_ok(&rag, "rag-eval");
    assert!(String::from_utf8_lossy(&rag.stdout).contains("mean IoU"));
    assert!(out.join("rag_report.json").exists());

    assert_ok(&run(&[&["grad-check"], &base[..]].concat()), "grad-check");
    let raw = fs::read_to_string(out.join("gradcheck.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&raw).unwrap();
    assert_eq!(v["pass"], serde_json::Value::Bool(true));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out_s = dir.path().to_str().unwrap().to_owned();

    // No subcommand at all.
    assert_eq!(run(&[]).status.code(), Some(1));
    // Unknown subcommand.
    assert_eq!(run(&["frobnicate", "--out", &out_s]).status.code(), Some(1));
    // Bad modality value.
    let bad = run(&["eval", "--out", &out_s, "--modality", "bogus"]);
    assert_eq!(bad.status.code(), Some(1));
    // Malformed config file.
    let cfg = dir.path().join("broken.toml");
    fs::write(&cfg, "not = [valid").unwrap();
    let broken = run(&[
        "gen-synthetic",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_s,
    ]);
    assert_eq!(broken.status.code(), Some(1));
    assert!(stderr(&broken).contains("broken.toml"), "{}", stderr(&broken));
    // --help still exits 0.
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_two_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty");
    let out_s = out.to_str().unwrap();

    let train = run(&["train", "--out", out_s]);
    assert_eq!(train.status.code(), Some(2));
    assert!(stderr(&train).contains("train.jsonl"), "{}", stderr(&train));

    let eval = run(&["eval", "--out", out_s]);
    assert_eq!(eval.status.code(), Some(2));
    assert!(stderr(&eval).contains("treble train"), "{}", stderr(&eval));

    let distill = run(&["distill", "--out", out_s]);
    assert_eq!(distill.status.code(), Some(2));
    assert!(stderr(&distill).contains("model.ckpt"), "{}", stderr(&distill));
}

#[test]
fn generation_is_seed_deterministic_and_respects_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let run_out = run(&[
            "gen-synthetic",
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "99",
        ]);
        assert_ok(&run_out, "gen-synthetic");
    }
    for name in ["train.jsonl", "test.jsonl", "distill.jsonl", "rag_notes.jsonl"] {
        let bytes_a = fs::read(a.join(name)).unwrap();
        let bytes_b = fs::read(b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between identical runs");
    }

    // Same dir again: refused without --overwrite, clean with it.
    let refused = run(&[
        "gen-synthetic",
        "--config",
        &config,
        "--out",
        a.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(stderr(&refused).contains("--overwrite"), "{}", stderr(&refused));
    let forced = run(&[
        "gen-synthetic",
        "--config",
        &config,
        "--out",
        a.to_str().unwrap(),
        "--seed",
        "99",
        "--overwrite",
    ]);
    assert_ok(&forced, "gen-synthetic --overwrite");
}
