use std::fs;
use std::path::Path;

use serde_json::Value;
use spoken_digits::cli::run_cli;

fn cli(args: &[&str]) -> i32 {
    run_cli(std::iter::once("spoken-digits").chain(args.iter().copied()))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&[]), 1);
    assert_eq!(cli(&["frobnicate"]), 1);
    assert_eq!(cli(&["train"]), 1);
    assert_eq!(cli(&["--help"]), 0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 1, "no_such_key": true}"#).unwrap();
    let out = dir.path().join("out");
    assert_eq!(cli(&["scan", s(dir.path()), "--config", s(&cfg), "--out", s(&out)]), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(cli(&["scan", s(&dir.path().join("missing")), "--out", s(&out)]), 2);
    let manifest = dir.path().join("m.json");
    fs::write(&manifest, "{ not json").unwrap();
    assert_eq!(cli(&["validate", s(&manifest), "--out", s(&out)]), 2);
}

#[test]
fn pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    assert_eq!(cli(&["synth", "--per-class", "5", "--seed", "3", "--out", s(&base)]), 0);
    let manifest = base.join("manifest.json");
    assert_eq!(json(&manifest)["entries"].as_array().unwrap().len(), 50);

    let run = json(&base.join("run.json"));
    assert_eq!(run["command"], "synth");
    assert_eq!(run["seed"], 3);
    let artifacts = run["artifacts"].as_object().unwrap();
    assert_eq!(artifacts.len(), 51);
    assert!(artifacts.values().all(|h| h.as_str().unwrap().len() == 64));

    let scanned = dir.path().join("scanned");
    assert_eq!(cli(&["scan", s(&base.join("corpus")), "--out", s(&scanned)]), 0);
    assert_eq!(json(&scanned.join("manifest.json"))["entries"].as_array().unwrap().len(), 50);

    let checked = dir.path().join("checked");
    assert_eq!(cli(&["validate", s(&manifest), "--out", s(&checked)]), 0);
    assert!(json(&checked.join("validation.json"))["problems"].as_array().unwrap().is_empty());

    let aug = dir.path().join("aug");
    assert_eq!(cli(&["augment", s(&manifest), "--multiplier", "1", "--seed", "3", "--out", s(&aug)]), 0);
    let aug_manifest = aug.join("manifest.json");
    assert_eq!(json(&aug_manifest)["entries"].as_array().unwrap().len(), 100);

    let feats = dir.path().join("feats");
    assert_eq!(cli(&["featurize", s(&manifest), "--debug-csv", "--out", s(&feats)]), 0);
    assert!(feats.join("features/00049.sdfm").exists());
    assert!(feats.join("features/00000.csv").exists());

    let trained = dir.path().join("trained");
    assert_eq!(cli(&["train", s(&aug_manifest), "--epochs", "2", "--seed", "3", "--out", s(&trained)]), 0);
    let model = trained.join("model.sdck");
    assert!(model.exists());
    let history = fs::read_to_string(trained.join("history.csv")).unwrap();
    assert_eq!(history.lines().next().unwrap(), "epoch,train_loss,train_acc,val_loss,val_acc");
    assert_eq!(history.lines().count(), 3);

    let evaluated = dir.path().join("evaluated");
    assert_eq!(cli(&["evaluate", s(&aug_manifest), "--model", s(&model), "--seed", "3", "--out", s(&evaluated)]), 0);
    let csv = fs::read_to_string(evaluated.join("confusion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(json(&evaluated.join("metrics.json"))["per_class"].as_array().is_some());

    let wav = base.join("corpus/4/tone0000.wav");
    let predicted = dir.path().join("predicted");
    assert_eq!(cli(&["predict", s(&wav), "--model", s(&model), "--out", s(&predicted)]), 0);
    let p = json(&predicted.join("prediction.json"));
    assert!(p["digit"].as_u64().unwrap() < 10);
    let total: f64 = p["probabilities"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert_eq!(cli(&["predict", s(&base.join("none.wav")), "--model", s(&model), "--out", s(&predicted)]), 2);

    let reported = dir.path().join("reported");
    assert_eq!(cli(&["report", s(&evaluated), "--out", s(&reported)]), 0);
    assert!(fs::read_to_string(reported.join("report.md")).unwrap().contains("ccuracy"));
}

#[test]
fn crossval_emits_ten_fold_reports() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    assert_eq!(cli(&["synth", "--per-class", "10", "--out", s(&base)]), 0);
    let out = dir.path().join("cv");
    let manifest = base.join("manifest.json");
    assert_eq!(cli(&["crossval", s(&manifest), "--k", "10", "--epochs", "1", "--out", s(&out)]), 0);
    for fold in 0..10 {
        assert!(out.join(format!("folds/fold_{fold:02}.json")).exists());
        assert!(out.join(format!("folds/fold_{fold:02}_history.csv")).exists());
    }
    let summary = json(&out.join("crossval.json"));
    assert_eq!(summary["k"], 10);
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    assert_eq!(cli(&["synth", "--per-class", "5", "--out", s(&base)]), 0);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"lr": 1e300, "epochs": 5, "batch_size": 8}"#).unwrap();
    let out = dir.path().join("out");
    assert_eq!(cli(&["train", s(&base.join("manifest.json")), "--config", s(&cfg), "--out", s(&out)]), 3);
}
