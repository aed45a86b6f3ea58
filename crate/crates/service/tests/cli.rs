mod common;

use std::path::Path;
use std::process::{Command, Output};

use gaitlens_core::model::save_checkpoint;
use gaitlens_service::load_dataset;
use serde_json::Value;

fn gaitlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaitlens")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn accuracy(o: &Output) -> f64 {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix("accuracy: "))
        .expect("accuracy line")
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn usage_errors_exit_with_2() {
    for args in [&["frobnicate"][..], &["synth", "--bogus"], &["train"], &[]] {
        let o = gaitlens(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let o = gaitlens(&["eval", "--dataset", s(&missing), "--checkpoint", s(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    // synth without --out.
    let o = gaitlens(&["synth", "--legs-per-class", "2"]);
    assert_eq!(o.status.code(), Some(1));
    // Unknown field in a config file.
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"train": {"epoch": 3}}"#).unwrap();
    let o = gaitlens(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("x.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train.epoch"));
}

#[test]
fn synth_writes_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds.json");
    let o = gaitlens(&["synth", "--legs-per-class", "50", "--seed", "7", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = load_dataset(&out).unwrap();
    assert_eq!(ds.patients.len(), 100);
    assert_eq!(ds.ground_truth.len(), 200);
}

#[test]
fn explain_writes_relevance_and_image() {
    let dir = tempfile::tempdir().unwrap();
    let ds_path = dir.path().join("ds.json");
    let ds = common::cohort(3, 2);
    gaitlens_service::save_dataset(&ds, &ds_path).unwrap();
    let ck = dir.path().join("model.ckpt");
    save_checkpoint(&common::random_checkpoint(2), &ck).unwrap();
    let id = ds.patients[0].id.clone();
    let out = dir.path().join("explain");
    let o = gaitlens(&["explain", "--dataset", s(&ds_path), "--checkpoint", s(&ck), "--patient", &id, "--side", "right", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let export: Value = serde_json::from_str(&std::fs::read_to_string(out.join(format!("{id}-right-relevance.json"))).unwrap()).unwrap();
    assert_eq!(export["patientId"], id.as_str());
    assert_eq!(export["probabilities"].as_array().unwrap().len(), 4);
    let png = image::open(out.join(format!("{id}-overview.png"))).unwrap();
    assert_eq!(png.height(), 29 * 13 - 1);
    let o = gaitlens(&["explain", "--dataset", s(&ds_path), "--checkpoint", s(&ck), "--patient", "000000", "--side", "left", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_then_eval_on_held_out_patients() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds.json");
    let ck = dir.path().join("model.ckpt");
    let report = dir.path().join("train.json");
    let eval_out = dir.path().join("eval.json");
    assert!(gaitlens(&["synth", "--seed", "7", "--out", s(&ds)]).status.success());
    let o = gaitlens(&["train", "--dataset", s(&ds), "--seed", "7", "--epochs", "20", "--out", s(&ck), "--report", s(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stderr).lines().filter(|l| l.starts_with("epoch")).count(), 20);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(summary["heldOutPatients"], 20);
    assert_eq!(summary["history"].as_array().unwrap().len(), 20);

    let o = gaitlens(&["eval", "--dataset", s(&ds), "--checkpoint", s(&ck), "--out", s(&eval_out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(accuracy(&o) >= 0.95, "{text}");
    assert!(text.contains("confusion"));
    assert!(text.contains("perturbation fidelity"));
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&eval_out).unwrap()).unwrap();
    assert_eq!(written["legs"], 40);

    // Against permuted labels the same model is right about a quarter of the time.
    let o = gaitlens(&["eval", "--dataset", s(&ds), "--checkpoint", s(&ck), "--shuffle-labels"]);
    assert!(o.status.success());
    let acc = accuracy(&o);
    assert!((acc - 0.25).abs() <= 0.15, "{acc}");
}
