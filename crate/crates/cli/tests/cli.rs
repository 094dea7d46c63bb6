use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn sgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgc"))
        .args(args)
        .env_remove("SGC_CONFIG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = sgc(args);
    assert!(
        out.status.success(),
        "sgc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Small dataset plus a 2-epoch checkpoint trained on it.
fn trained(root: &Path) -> (PathBuf, PathBuf) {
    let data = root.join("data");
    ok(&["gen", "--clips", "12", "--balance", "0.5", "--seed", "3", "--out", s(&data)]);
    let run = root.join("run");
    let dataset = data.join("dataset.jsonl");
    ok(&["train", "--dataset", s(&dataset), "--out", s(&run), "--epochs", "2", "--no-early-stop"]);
    (dataset, run.join("model.ckpt"))
}

#[test]
fn balance_outside_unit_interval_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sgc(&["gen", "--clips", "10", "--balance", "1.5", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("between 0 and 1"));
}

#[test]
fn gen_creates_missing_output_directories() {
    let dir = tempfile::tempdir().unwrap();
    let nested = dir.path().join("a/b/c");
    let stdout = ok(&["gen", "--clips", "10", "--balance", "0.5", "--out", s(&nested)]);
    assert!(stdout.contains("10 clips"));
    let manifest = read_json(&nested.join("manifest.json"));
    assert_eq!(manifest["clips"], 10);
    assert_eq!(manifest["collision_clips"], 5);
}

#[test]
fn config_dump_round_trips_through_config_flag() {
    let dir = tempfile::tempdir().unwrap();
    let first = ok(&["config", "dump"]);
    assert!(first.contains("[scenario]") && first.contains("[train]"));
    let path = dir.path().join("run.toml");
    std::fs::write(&path, &first).unwrap();
    assert_eq!(ok(&["--config", s(&path), "config", "dump"]), first);
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[train]\nlearning_rat = 0.1\n").unwrap();
    let out = sgc(&["--config", s(&path), "config", "dump"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
}

#[test]
fn train_honours_history_and_preset() {
    let dir = tempfile::tempdir().unwrap();
    let (dataset, _) = trained(dir.path());
    let run = dir.path().join("windowed");
    ok(&[
        "train",
        "--dataset",
        s(&dataset),
        "--out",
        s(&run),
        "--epochs",
        "1",
        "--history",
        "window5",
        "--preset",
        "620dash",
    ]);
    let manifest = read_json(&run.join("manifest.json"));
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["model"]["history"], "window5");
    assert_eq!(manifest["model"]["mrgcn_layers"], 1);
    assert_eq!(manifest["model"]["pooling"], "none");
    assert!(run.join("model.ckpt").exists());
    assert!(run.join("curve.csv").exists());

    let bad = sgc(&["train", "--dataset", s(&dataset), "--history", "window0"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn eval_and_transfer_report_clip_level_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (dataset, ckpt) = trained(dir.path());
    for command in ["eval", "transfer"] {
        let out = dir.path().join(command);
        let table = ok(&[command, "--checkpoint", s(&ckpt), "--dataset", s(&dataset), "--per-clip", "--out", s(&out)]);
        assert!(table.contains("mcc"));
        let report = read_json(&out.join("report.json"));
        assert_eq!(report["clips"], 12);
        assert!(report["clip_level"].is_object(), "{report}");
        assert_eq!(read_json(&out.join("manifest.json"))["command"], command);
    }
    let plain = dir.path().join("plain");
    ok(&["eval", "--checkpoint", s(&ckpt), "--dataset", s(&dataset), "--out", s(&plain)]);
    assert!(read_json(&plain.join("report.json"))["clip_level"].is_null());
}

#[test]
fn eval_rejects_classes_outside_the_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let (dataset, ckpt) = trained(dir.path());
    let text = std::fs::read_to_string(&dataset).unwrap();
    let tampered = dir.path().join("tram.jsonl");
    std::fs::write(&tampered, text.replacen("\"class\":\"car\"", "\"class\":\"tram\"", 1)).unwrap();
    let out = sgc(&["eval", "--checkpoint", s(&ckpt), "--dataset", s(&tampered)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("schema") && err.contains("tram"), "{err}");
}

#[test]
fn bench_rejects_zero_repetitions() {
    let dir = tempfile::tempdir().unwrap();
    let (dataset, ckpt) = trained(dir.path());
    let out = sgc(&["bench", "--checkpoint", s(&ckpt), "--dataset", s(&dataset), "--repetitions", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_reports_stable_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let (dataset, ckpt) = trained(dir.path());
    let runs: Vec<Value> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("bench{i}"));
            ok(&[
                "bench",
                "--checkpoint",
                s(&ckpt),
                "--dataset",
                s(&dataset),
                "--repetitions",
                "50",
                "--warmup",
                "5",
                "--out",
                s(&out),
            ]);
            read_json(&out.join("bench.json"))
        })
        .collect();
    assert_eq!(runs[0]["parameters"], runs[1]["parameters"]);
    assert_eq!(runs[0]["checkpoint_kb"], runs[1]["checkpoint_kb"]);
    assert_eq!(runs[0]["timed_frames"], 50);
    assert!(runs[0]["p99_ms"].as_f64().unwrap() >= runs[0]["median_ms"].as_f64().unwrap());
}
