use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use intervene_core::config::RunConfig;

fn intervene(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intervene"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const PENALTY: &str = r#"{
    "spec_version": 1,
    "env": {"kind": "gridworld"},
    "pilot": {"kind": "scripted"},
    "method": {"kind": "penalty", "lambda": 0.5},
    "learner": {"kind": "tabular", "training_frames": 5000, "final_exploration_frame": 2500},
    "eval_episodes": 5,
    "out": "run"
}"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_writes_checkpoint_curves_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "penalty.json", PENALTY);
    let out = intervene(&["train", "--config", s(&cfg), "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    for f in ["copilot.ckpt", "copilot.ckpt.method.json", "curves.csv", "manifest.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let curves = std::fs::read_to_string(run.join("curves.csv")).unwrap();
    assert!(curves.lines().count() > 10);

    // The echoed config is the resolved config with the seed override applied.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    let echoed: RunConfig = serde_json::from_value(manifest["config"].clone()).unwrap();
    let mut expected = RunConfig::load(&cfg).unwrap();
    expected.seed = 4;
    assert_eq!(echoed.to_json().unwrap(), expected.to_json().unwrap());
    assert_eq!(manifest["frames"], 5000);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", &PENALTY.replace("\"penalty\"", "\"bribe\""));
    let out = intervene(&["train", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("method") && err.contains("bribe"), "{err}");

    let typo = write_config(dir.path(), "typo.json", &PENALTY.replace("training_frames", "training_frame"));
    let out = intervene(&["train", "--config", s(&typo)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learner.training_frame"));

    assert_eq!(intervene(&["train"]).status.code(), Some(2));
    assert_eq!(intervene(&["train", "--config", "/nonexistent.json"]).status.code(), Some(2));
}

#[test]
fn eval_is_reproducible_and_exports_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "penalty.json", PENALTY);
    assert!(intervene(&["train", "--config", s(&cfg)]).status.success());
    let ckpt = dir.path().join("run/copilot.ckpt");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = intervene(&[
            "eval", "--checkpoint", s(&ckpt), "--pilot", r#"{"kind":"scripted"}"#, "--episodes", "20", "--seed", "9", "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a.join("metrics.csv")), read(&b.join("metrics.csv")));
    assert_eq!(read(&a.join("episodes.jsonl")), read(&b.join("episodes.jsonl")));

    let missing = intervene(&["eval", "--checkpoint", s(&dir.path().join("nope.ckpt")), "--pilot", r#"{"kind":"scripted"}"#]);
    assert_eq!(missing.status.code(), Some(2));
    let no_pilot = intervene(&["eval", "--checkpoint", s(&ckpt)]);
    assert_eq!(no_pilot.status.code(), Some(2));

    let heat = dir.path().join("heat");
    assert!(intervene(&["export", "--logs", s(&a), "--heatmap", "--out", s(&heat)]).status.success());
    let all = std::fs::read_to_string(heat.join("heatmap_all.csv")).unwrap();
    let total: f64 = all
        .lines()
        .flat_map(|l| l.split(','))
        .map(|v| v.parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
    let feats = dir.path().join("feats");
    assert!(intervene(&["export", "--logs", s(&a), "--features", "--out", s(&feats)]).status.success());
    assert!(feats.join("feature_histograms.csv").is_file());
    assert_eq!(intervene(&["export", "--logs", s(&a), "--out", s(&feats)]).status.code(), Some(2));
}

#[test]
fn sweep_is_independent_of_worker_count_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let body = PENALTY
        .replace("\"lambda\": 0.5", "\"lambda\": 0")
        .replace("\"eval_episodes\": 5", "\"eval_episodes\": 3, \"sweep\": {\"values\": [0, 1, 3], \"seeds\": [1, 2]}");
    let cfg = write_config(dir.path(), "sweep.json", &body);
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    assert!(intervene(&["sweep", "--config", s(&cfg), "--workers", "1", "--out", s(&one)]).status.success());
    assert!(intervene(&["sweep", "--config", s(&cfg), "--workers", "2", "--out", s(&two)]).status.success());
    let results = std::fs::read_to_string(one.join("results.csv")).unwrap();
    assert_eq!(results, std::fs::read_to_string(two.join("results.csv")).unwrap());
    assert_eq!(results.lines().count(), 1 + 6);

    // Drop all but two finished cells, as after an interruption.
    let ledger = one.join("ledger.jsonl");
    let text = std::fs::read_to_string(&ledger).unwrap();
    let partial: Vec<&str> = text.lines().take(3).collect();
    std::fs::write(&ledger, partial.join("\n") + "\n{\"cell\":").unwrap();
    std::fs::remove_file(one.join("results.csv")).unwrap();
    assert!(intervene(&["sweep", "--config", s(&cfg), "--workers", "1", "--out", s(&one)]).status.success());
    assert_eq!(std::fs::read_to_string(one.join("results.csv")).unwrap(), results);
}

#[test]
fn budget_preset_sweep_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let body = PENALTY
        .replace(r#""kind": "penalty", "lambda": 0.5"#, r#""kind": "budget", "budget": 0"#)
        .replace("\"training_frames\": 5000", "\"training_frames\": 300")
        .replace("\"eval_episodes\": 5", "\"eval_episodes\": 1, \"sweep\": {\"preset\": \"standard\"}");
    let cfg = write_config(dir.path(), "budget.json", &body);
    let out = dir.path().join("b");
    let o = intervene(&["sweep", "--config", s(&cfg), "--workers", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 160);
}
