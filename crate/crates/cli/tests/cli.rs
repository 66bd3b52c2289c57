use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn hybfer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybfer"))
        .current_dir(dir)
        .env("HYBFER_THREADS", "1")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--out", name];
    args.extend_from_slice(extra);
    ok(&hybfer(dir, &args));
    dir.join(name)
}

#[test]
fn sift_model_without_codebook_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv", &["--train", "4"]);
    let out = hybfer(dir.path(), &["train", "--model", "cnn-sift", "--data", "d.csv", "--out", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = hybfer(dir.path(), &["train", "--model", "cnn", "--data", "absent.csv", "--out", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));
}

#[test]
fn output_equal_to_input_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv", &["--train", "2"]);
    let out = hybfer(dir.path(), &["augment", "--data", "d.csv", "--out", "d.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hybfer"))
        .current_dir(dir.path())
        .env("HYBFER_THREADS", "many")
        .args(["synth", "--out", "d.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_writes_history_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv", &["--train", "12", "--public", "4"]);
    ok(&hybfer(
        dir.path(),
        &[
            "--out-dir", "runs", "train", "--model", "cnn", "--data", "d.csv", "--out", "m.ckpt", "--epochs", "2",
            "--no-augment", "--batch-size", "8",
        ],
    ));
    let runs = dir.path().join("runs");
    let history = fs::read_to_string(runs.join("m.ckpt.history.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = history.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["epoch"], 2);
    assert!(lines[0]["val_acc"].is_number());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(runs.join("m.ckpt.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 0);
    let sums = manifest["checksums"].as_object().unwrap();
    assert_eq!(sums.len(), 3);
    for (path, sum) in sums {
        let bytes = fs::read(dir.path().join(path)).unwrap();
        let expected = hex::encode(Sha256::digest(&bytes));
        assert_eq!(sum.as_str().unwrap(), expected, "{path}");
    }
}

#[test]
fn identical_checkpoints_average_to_the_single_model() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv", &["--train", "8", "--private", "14"]);
    ok(&hybfer(
        dir.path(),
        &["train", "--model", "cnn", "--data", "d.csv", "--out", "m.ckpt", "--epochs", "1", "--no-augment"],
    ));
    let single = ok(&hybfer(dir.path(), &["evaluate", "--checkpoint", "m.ckpt", "--data", "d.csv"]));
    let triple = ok(&hybfer(
        dir.path(),
        &[
            "evaluate", "--checkpoint", "m.ckpt", "--checkpoint", "m.ckpt", "--checkpoint", "m.ckpt", "--data",
            "d.csv", "--confusion", "c3.csv",
        ],
    ));
    assert!(single.starts_with("accuracy="));
    assert_eq!(single, triple);
    assert_eq!(
        fs::read(dir.path().join("confusion.csv")).unwrap(),
        fs::read(dir.path().join("c3.csv")).unwrap()
    );

    let empty = hybfer(dir.path(), &["evaluate", "--checkpoint", "m.ckpt", "--data", "d.csv", "--split", "public"]);
    assert_eq!(empty.status.code(), Some(1));
}

#[test]
fn mismatched_class_counts_fail() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d6.csv", &["--classes", "6", "--train", "6", "--private", "6"]);
    for (classes, out) in [("6", "a.ckpt"), ("7", "b.ckpt")] {
        ok(&hybfer(
            dir.path(),
            &[
                "train", "--model", "cnn", "--data", "d6.csv", "--out", out, "--epochs", "1", "--no-augment",
                "--classes", classes,
            ],
        ));
    }
    let out = hybfer(dir.path(), &["evaluate", "--checkpoint", "a.ckpt", "--checkpoint", "b.ckpt", "--data", "d6.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn codebook_larger_than_descriptor_pool_fails() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv", &["--train", "10"]);
    let out = hybfer(dir.path(), &["fit-codebook", "--data", "d.csv", "--out", "cb.bin", "--k", "2048"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--k"));
}

#[test]
fn codebook_fit_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv", &["--train", "30"]);
    for name in ["a.bin", "b.bin"] {
        ok(&hybfer(dir.path(), &["fit-codebook", "--data", "d.csv", "--out", name, "--k", "8", "--seed", "5"]));
    }
    assert_eq!(fs::read(dir.path().join("a.bin")).unwrap(), fs::read(dir.path().join("b.bin")).unwrap());
}

#[test]
fn augment_emits_eleven_rows_per_image() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv", &["--train", "3", "--public", "2"]);
    let stdout = ok(&hybfer(dir.path(), &["augment", "--data", "d.csv", "--out", "aug.csv"]));
    assert!(stdout.starts_with("rows=33"));
    let text = fs::read_to_string(dir.path().join("aug.csv")).unwrap();
    assert_eq!(text.lines().count(), 34);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",Training")));
}

#[test]
fn predict_writes_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv", &["--train", "5", "--private", "3"]);
    ok(&hybfer(
        dir.path(),
        &["train", "--model", "cnn", "--data", "d.csv", "--out", "m.ckpt", "--epochs", "1", "--no-augment"],
    ));
    ok(&hybfer(dir.path(), &["predict", "--checkpoint", "m.ckpt", "--data", "d.csv", "--out", "p.csv"]));
    let text = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 9);
    for row in &rows[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 5 + 7);
        let total: f64 = fields[5..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-4);
    }
}

#[test]
fn cross_validation_plan_sizes() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "ck.csv", &["--classes", "6", "--train", "309"]);
    let stdout = ok(&hybfer(dir.path(), &["cross-validate", "--data", "ck.csv", "--plan-only"]));
    assert_eq!(stdout.trim(), "fold_sizes=31,31,31,31,31,31,31,31,31,30");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cv_report.json")).unwrap()).unwrap();
    assert_eq!(report["samples"], 309);
    let mut seen: Vec<u64> = report["fold_indices"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|f| f.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()))
        .collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..309).collect::<Vec<u64>>());
}

#[test]
fn cross_validation_runs_folds() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d7.csv", &["--train", "6"]);
    synth(dir.path(), "ck.csv", &["--classes", "6", "--train", "9", "--seed", "1"]);
    ok(&hybfer(
        dir.path(),
        &["train", "--model", "cnn", "--data", "d7.csv", "--out", "m.ckpt", "--epochs", "1", "--no-augment"],
    ));
    let stdout = ok(&hybfer(
        dir.path(),
        &[
            "cross-validate", "--checkpoint", "m.ckpt", "--data", "ck.csv", "--folds", "3", "--epochs", "1",
            "--no-augment",
        ],
    ));
    assert!(stdout.contains("accuracy_mean="));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cv_report.json")).unwrap()).unwrap();
    assert_eq!(report["accuracies"].as_array().unwrap().len(), 3);
}
