use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn idal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idal"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn idal")
}

fn ok(args: &[&str]) -> String {
    let out = idal(args);
    assert!(
        out.status.success(),
        "idal {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    idal(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small generated pair under `dir/data`.
fn data(dir: &Path, seed: u64) -> PathBuf {
    let out = dir.join(format!("data{seed}"));
    ok(&[
        "gen-data",
        "--out",
        s(&out),
        "--n-source",
        "200",
        "--n-target",
        "160",
        "--seed",
        &seed.to_string(),
    ]);
    out
}

const SMALL: [&str; 6] = ["--epochs", "2", "--batch-size", "32", "--warmup-epochs", "1"];

fn train(dir: &Path, data: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let (src, tgt) = (data.join("source.csv"), data.join("target.csv"));
    let mut args = vec!["train", "--source", s(&src), "--target", s(&tgt), "--out", s(&out)];
    if !extra.contains(&"--epochs") {
        args.extend_from_slice(&SMALL[..2]);
    }
    args.extend_from_slice(&SMALL[2..]);
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn metrics(run: &Path) -> Vec<Value> {
    std::fs::read_to_string(run.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn gen_data_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = data(dir.path(), 4);
    let b = dir.path().join("again");
    ok(&[
        "gen-data",
        "--out",
        s(&b),
        "--n-source",
        "200",
        "--n-target",
        "160",
        "--seed",
        "4",
    ]);
    for f in ["spec.json", "source.csv", "target.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let c = data(dir.path(), 5);
    assert_ne!(
        std::fs::read(a.join("target.csv")).unwrap(),
        std::fs::read(c.join("target.csv")).unwrap()
    );
}

#[test]
fn invalid_spec_is_a_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    assert_eq!(code(&["gen-data", "--out", s(&out), "--k", "1"]), 1);
    assert!(!out.exists());
    assert_eq!(code(&["train", "--no-such-flag"]), 1);
    assert_eq!(code(&["train", "--preset", "imagenet", "--dry-run"]), 1);
}

#[test]
fn presets_resolve_published_weights() {
    let cfg: Value = serde_json::from_str(&ok(&["train", "--preset", "office31", "--dry-run"])).unwrap();
    let w = &cfg["loss_weights"];
    assert_eq!((w["beta"].as_f64(), w["gamma"].as_f64()), (Some(0.05), Some(0.1)));
    assert_eq!((w["delta"].as_f64(), w["eta"].as_f64()), (Some(0.15), Some(0.15)));

    let cfg: Value = serde_json::from_str(&ok(&["train", "--preset", "visda", "--gamma", "0.5", "--dry-run"])).unwrap();
    assert_eq!(cfg["loss_weights"]["gamma"].as_f64(), Some(0.5));
    assert_eq!(cfg["loss_weights"]["delta"].as_f64(), Some(0.25));
}

#[test]
fn config_file_sits_between_flags_and_preset() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.json");
    std::fs::write(&file, r#"{"preset": "officehome", "epochs": 7, "eta": 0.5}"#).unwrap();
    let cfg: Value = serde_json::from_str(&ok(&["train", "--config", s(&file), "--eta", "0.4", "--dry-run"])).unwrap();
    assert_eq!(cfg["epochs"].as_u64(), Some(7));
    assert_eq!(cfg["loss_weights"]["eta"].as_f64(), Some(0.4));
    assert_eq!(cfg["loss_weights"]["gamma"].as_f64(), Some(0.21));
}

#[test]
fn missing_inputs_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let nope = dir.path().join("nope.csv");
    let out = dir.path().join("out");
    assert_eq!(
        code(&["train", "--source", s(&nope), "--target", s(&nope), "--out", s(&out)]),
        3
    );
    assert!(!out.exists());
    assert_eq!(
        code(&["eval", "--checkpoint", s(&dir.path().join("ck")), "--target", s(&nope)]),
        3
    );
}

#[test]
fn zero_epoch_run_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path(), 0);
    let run = train(dir.path(), &d, "zero", &["--epochs", "0"]);
    let lines = metrics(&run);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["header"], "idal-metrics");
    assert!(run.join("checkpoint/manifest.json").exists());
    assert!(run.join("config.json").exists());
}

#[test]
fn train_then_eval_agree_with_final_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path(), 1);
    let run = train(dir.path(), &d, "run", &["--seed", "2"]);
    let last = metrics(&run).pop().unwrap();
    let report = dir.path().join("report");
    let stdout = ok(&[
        "eval",
        "--checkpoint",
        s(&run.join("checkpoint")),
        "--source",
        s(&d.join("source.csv")),
        "--target",
        s(&d.join("target.csv")),
        "--out",
        s(&report),
    ]);
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(report.join("report.json")).unwrap()).unwrap();
    for key in [
        "source_accuracy",
        "target_accuracy",
        "proxy_a_distance",
        "target_per_class_accuracy",
    ] {
        assert_eq!(rep[key], last[key], "{key}");
    }
    assert!(stdout.contains("target_accuracy"));
    assert_eq!(
        std::fs::read_to_string(run.join("embeddings.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 200 + 160
    );
}

#[test]
fn train_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path(), 3);
    let a = train(dir.path(), &d, "a", &[]);
    let b = train(dir.path(), &d, "b", &[]);
    assert_eq!(
        std::fs::read(a.join("metrics.jsonl")).unwrap(),
        std::fs::read(b.join("metrics.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("checkpoint/params.bin")).unwrap(),
        std::fs::read(b.join("checkpoint/params.bin")).unwrap()
    );
}

#[test]
fn existing_output_directory_is_not_clobbered() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path(), 0);
    assert_ne!(code(&["gen-data", "--out", s(&d)]), 0);
    assert!(d.join("source.csv").exists());
}

#[test]
fn gradcheck_rows_and_filter() {
    let all = ok(&["gradcheck"]);
    assert_eq!(all.lines().filter(|l| l.trim_end().ends_with(" ok")).count(), 6);
    let one = ok(&["gradcheck", "--loss", "mmd", "--seed", "9"]);
    let rows: Vec<&str> = one.lines().filter(|l| l.trim_end().ends_with(" ok")).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("mmd"));
    assert_eq!(code(&["gradcheck", "--loss", "hinge"]), 1);
}

#[test]
fn ablate_emits_ladder_and_first_row_matches_train() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(dir.path(), 6);
    let out = dir.path().join("abl");
    let (src, tgt) = (d.join("source.csv"), d.join("target.csv"));
    let mut args = vec![
        "ablate",
        "--source",
        s(&src),
        "--target",
        s(&tgt),
        "--out",
        s(&out),
        "--seeds",
        "1",
    ];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(&["--seed", "5"]);
    ok(&args);
    let table: Value = serde_json::from_str(&std::fs::read_to_string(out.join("ablation.json")).unwrap()).unwrap();
    let names: Vec<&str> = table["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["clc+dis", "+mmd", "+mcc", "+plmmd"]);
    assert!(std::fs::read_to_string(out.join("ablation.txt"))
        .unwrap()
        .contains("+plmmd"));

    let run = train(
        dir.path(),
        &d,
        "row1",
        &["--seed", "5", "--gamma", "0", "--delta", "0", "--eta", "0"],
    );
    let last = metrics(&run).pop().unwrap();
    assert_eq!(table["rows"][0]["accuracies"][0], last["target_accuracy"]);
}
