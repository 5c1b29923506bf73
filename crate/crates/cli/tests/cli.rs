//! End-to-end runs of the `mmn` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mmn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmn")).args(args).env("MMN_NUM_THREADS", "2").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn small_dataset(dir: &Path) {
    let out = mmn(&[
        "synth-gen", "--out", dir.to_str().unwrap(), "--classes", "3", "--per-class", "10", "--joints", "5", "--raw-len", "16",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_gen_counts_determinism_and_refusal() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = mmn(&["synth-gen", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success());
        assert!(stdout(&out).contains("wrote 400 samples"), "{}", stdout(&out));
    }
    let mut total = 0;
    for split in ["train", "val", "test"] {
        let fa = std::fs::read(a.join(format!("{split}.jsonl"))).unwrap();
        assert_eq!(fa, std::fs::read(b.join(format!("{split}.jsonl"))).unwrap());
        total += String::from_utf8(fa).unwrap().lines().count() - 1;
    }
    assert_eq!(total, 400);

    let again = mmn(&["synth-gen", "--out", a.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(2));
    assert!(mmn(&["synth-gen", "--out", a.to_str().unwrap(), "--force"]).status.success());
}

#[test]
fn zero_amplitude_dataset_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mmn(&["synth-gen", "--out", tmp.path().to_str().unwrap(), "--amplitude", "0", "--per-class", "5"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("inseparable"));
    let header = std::fs::read_to_string(tmp.path().join("train.jsonl")).unwrap();
    assert!(header.lines().next().unwrap().contains("inseparable"));
}

#[test]
fn train_then_eval_reproduces_logged_validation_score() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    small_dataset(&data);
    let out = mmn(&[
        "train", "--dataset", data.to_str().unwrap(), "--out", run.to_str().unwrap(), "--epochs", "2", "--batch", "8",
        "--channels", "8", "--blocks", "1", "--stages", "2", "--seq-len", "8", "--seed", "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("config.txt").exists() && run.join("last.ckpt").exists());

    let log = std::fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    let records: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    let logged = records[1]["val_f1_mean"].as_f64().unwrap();

    let eval_dir = tmp.path().join("eval");
    let out = mmn(&[
        "eval", "--checkpoint", run.join("last.ckpt").to_str().unwrap(), "--dataset", data.to_str().unwrap(),
        "--split", "val", "--out", eval_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&eval_dir.join("report.json"));
    assert!((report["raw"]["f1_mean"].as_f64().unwrap() - logged).abs() < 1e-9);
    assert!(eval_dir.join("predictions.jsonl").exists() && eval_dir.join("confusion.csv").exists());

    // Resuming past the finished epochs continues the same log.
    let out = mmn(&[
        "train", "--dataset", data.to_str().unwrap(), "--out", run.to_str().unwrap(), "--epochs", "3",
        "--resume", run.join("last.ckpt").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(run.join("train_log.jsonl")).unwrap().lines().count(), 3);
}

#[test]
fn eval_of_perfect_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data);
    let test = std::fs::read_to_string(data.join("test.jsonl")).unwrap();
    let mut preds = String::new();
    for line in test.lines().skip(1) {
        let v: Value = serde_json::from_str(line).unwrap();
        let mut scores = vec![0.0; 3];
        scores[v["label"].as_u64().unwrap() as usize] = 5.0;
        preds.push_str(&serde_json::json!({"id": v["id"], "scores": scores}).to_string());
        preds.push('\n');
    }
    let path = tmp.path().join("perfect.jsonl");
    std::fs::write(&path, preds).unwrap();
    let out_dir = tmp.path().join("eval");
    let out = mmn(&[
        "eval", "--predictions", path.to_str().unwrap(), "--dataset", data.to_str().unwrap(), "--out",
        out_dir.to_str().unwrap(), "--ensemble-with", path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&out_dir.join("report.json"));
    assert_eq!(report["f1_mean"].as_f64(), Some(100.0));
    assert_eq!(report["raw"]["f1_mean"].as_f64(), Some(1.0));
    assert_eq!(report["top1_action"].as_f64(), Some(100.0));
}

#[test]
fn gradcheck_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mmn(&["gradcheck", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).lines().last().unwrap().starts_with("PASS"));
    assert!(tmp.path().join("gradcheck.json").exists());
}

#[test]
fn bench_reports_positive_figures() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mmn(&[
        "bench", "--iters", "3", "--warmup", "1", "--channels", "16", "--joints", "10", "--num-classes", "4", "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let b = read_json(&tmp.path().join("bench.json"));
    for key in ["params", "macs", "flops", "latency_ms_median", "latency_ms_p90"] {
        assert!(b[key].as_f64().unwrap() > 0.0, "{key}");
    }
    assert_eq!(b["flops"].as_f64().unwrap(), 2.0 * b["macs"].as_f64().unwrap());
}

#[test]
fn inspect_exports_feature_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    small_dataset(&data);
    assert!(mmn(&[
        "train", "--dataset", data.to_str().unwrap(), "--out", run.to_str().unwrap(), "--epochs", "1",
        "--channels", "8", "--blocks", "1", "--stages", "2", "--seq-len", "8",
    ])
    .status
    .success());
    let out_dir = tmp.path().join("maps");
    let out = mmn(&[
        "inspect", "--checkpoint", run.join("last.ckpt").to_str().unwrap(), "--dataset", data.to_str().unwrap(),
        "--out", out_dir.to_str().unwrap(), "--stage", "1", "--limit", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("feature_maps.jsonl")).unwrap();
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["shape"], serde_json::json!([4, 5]));
    assert_eq!(first["values"].as_array().unwrap().len(), 20);
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_eq!(mmn(&["inspect", "--dataset", dir, "--out", dir]).status.code(), Some(2));
    assert_eq!(mmn(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(mmn(&["train", "--dataset", dir, "--out", dir, "--no-such-field", "1"]).status.code(), Some(2));
    assert_eq!(mmn(&["bench", "--preset", "Z9"]).status.code(), Some(2));
    assert!(mmn(&["--help"]).status.success());
}
