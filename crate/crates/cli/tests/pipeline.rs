use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use folcount_core::detection::{self, DetectionLine, DEFAULT_THRESHOLD};
use folcount_core::model::{self, SCHEMA_VERSION};
use folcount_core::neighborhood::PredictionRecord;
use folcount_core::{Backend, Label, Predictor};
use sha2::{Digest, Sha256};

fn folcount(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_folcount"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = folcount(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth(dir: &Path, config: &str) {
    fs::write(dir.join("config.json"), config).unwrap();
    ok(dir, &["synth", "--config", "config.json", "--out", "corpus.jsonl"]);
}

fn manifest(dir: &Path, out: &str) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join(format!("{out}.manifest.json"))).unwrap()).unwrap()
}

#[test]
fn self_query_reproduces_displayed_counts() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), r#"{"seed": 4, "n_organic": 3, "n_customer": 0, "n_aggressive": 0}"#);
    ok(
        dir.path(),
        &["predict", "--corpus", "corpus.jsonl", "--reference", "corpus.jsonl", "--backend", "linear_scan", "--out", "p.jsonl"],
    );
    let records = model::load_records::<PredictionRecord>(dir.path().join("p.jsonl")).unwrap();
    assert_eq!(records.records.len(), 3);
    for r in &records.records {
        // The user itself sits at distance 0 and carries the floor weight.
        let rel = (r.predicted - r.displayed as f64).abs() / (r.displayed as f64).max(1.0);
        assert!(rel < 1e-6, "{r:?}");
        assert_eq!(r.neighbor_count, 3);
    }
}

#[test]
fn backends_write_identical_predictions() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), r#"{"seed": 8, "n_organic": 120, "n_customer": 15, "n_aggressive": 5}"#);
    let mut outputs = Vec::new();
    for backend in ["kd_tree", "ball_tree", "linear_scan"] {
        let out = format!("{backend}.jsonl");
        ok(
            dir.path(),
            &["predict", "--corpus", "corpus.jsonl", "--reference", "corpus.jsonl", "--reference-label", "random", "--backend", backend, "--out", &out],
        );
        outputs.push(fs::read(dir.path().join(out)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn detect_summary_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), r#"{"seed": 2, "n_organic": 200, "n_customer": 30, "n_aggressive": 10}"#);
    ok(dir.path(), &["featurize", "--corpus", "corpus.jsonl", "--out", "features.csv"]);
    ok(
        dir.path(),
        &["predict", "--corpus", "corpus.jsonl", "--reference", "corpus.jsonl", "--reference-label", "random", "--out", "p.jsonl"],
    );
    ok(dir.path(), &["detect", "--predictions", "p.jsonl", "--labels", "corpus.jsonl", "--out", "d.jsonl"]);

    let corpus = model::load_corpus(dir.path().join("corpus.jsonl"), SCHEMA_VERSION).unwrap().corpus;
    let features = folcount_core::features::read_feature_matrix(dir.path().join("features.csv")).unwrap();
    assert_eq!(features.len(), corpus.len());

    let predictor = Predictor::fit(&corpus.filter_label(Label::Random), Backend::KdTree).unwrap();
    let reports: Vec<_> = corpus
        .traces()
        .map(|t| detection::detect(&predictor.predict(t).unwrap(), t.displayed_follower_count(), DEFAULT_THRESHOLD).unwrap())
        .collect();
    let expected = detection::precision_recall(&reports, corpus.labels()).unwrap();

    let lines = model::load_records::<DetectionLine>(dir.path().join("d.jsonl")).unwrap();
    assert!(lines.rejections.is_empty());
    let Some(DetectionLine::Summary(summary)) = lines.records.last() else {
        panic!("last line is not a summary");
    };
    assert_eq!(summary.total, corpus.len());
    assert_eq!(summary.evaluation.as_ref(), Some(&expected));
    let flagged = reports.iter().filter(|r| r.verdict == detection::Verdict::Customer).count();
    assert_eq!(summary.flagged, flagged);
}

#[test]
fn detect_without_labels_omits_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), r#"{"seed": 3, "n_organic": 40, "n_customer": 5, "n_aggressive": 0}"#);
    ok(dir.path(), &["predict", "--corpus", "corpus.jsonl", "--reference", "corpus.jsonl", "--out", "p.jsonl"]);
    let out = folcount(dir.path(), &["detect", "--predictions", "p.jsonl", "--out", "d.jsonl"]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(summary["record"], "summary");
    assert!(summary.get("evaluation").is_none());
    assert!(!text.contains("precision"));
}

#[test]
fn rejected_records_exit_one_and_are_counted() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), r#"{"seed": 5, "n_organic": 20, "n_customer": 0, "n_aggressive": 0}"#);
    let text = fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap();
    let broken = text.replacen("\"follower_count\":", "\"follower_count\":-", 1);
    assert_ne!(broken, text);
    fs::write(dir.path().join("broken.jsonl"), broken).unwrap();

    let out = folcount(dir.path(), &["featurize", "--corpus", "broken.jsonl", "--out", "f.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().next().unwrap();
    assert!(line.starts_with("error[E_VALIDATION]: broken.jsonl: line "), "{stderr}");
    assert!(line.contains("follower_count"), "{stderr}");
    assert_eq!(manifest(dir.path(), "f.csv")["records_rejected"], 1);
}

#[test]
fn missing_input_is_a_coded_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = folcount(dir.path(), &["featurize", "--corpus", "nope.jsonl", "--out", "f.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error["));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["predict", "--corpus", "a.jsonl"][..],
        &["predict", "--corpus", "a", "--reference", "b", "--backend", "octree", "--out", "c"],
        &["frobnicate"],
        &["evaluate", "--corpus", "a", "--reference", "b", "--sweep", "10,x", "--out", "c"],
    ] {
        assert_eq!(folcount(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn manifest_records_parameters_and_digests() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), r#"{"seed": 6, "n_organic": 30, "n_customer": 10, "n_aggressive": 10}"#);
    ok(dir.path(), &["cluster", "--corpus", "corpus.jsonl", "--k", "3", "--seed", "9", "--series-out", "s.tsv", "--out", "c.jsonl"]);
    let m = manifest(dir.path(), "c.jsonl");
    assert_eq!(m["command"], "cluster");
    assert_eq!(m["seed"], 9);
    assert_eq!(m["parameters"]["k"], 3);
    assert_eq!(m["records_rejected"], 0);
    assert!(m["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert!(m["tool_version"].is_string());
    let digest = |name: &str| hex::encode(Sha256::digest(fs::read(dir.path().join(name)).unwrap()));
    assert_eq!(m["inputs"][0]["path"], "corpus.jsonl");
    assert_eq!(m["inputs"][0]["sha256"], digest("corpus.jsonl"));
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
    assert_eq!(outputs, ["c.jsonl", "s.tsv"]);
    assert_eq!(m["outputs"][1]["sha256"], digest("s.tsv"));

    let synth_manifest = manifest(dir.path(), "corpus.jsonl");
    assert_eq!(synth_manifest["seed"], 6);
    assert_eq!(synth_manifest["parameters"]["config"]["n_customer"], 10);
}

#[test]
fn evaluate_reports_sweep_and_groups() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), r#"{"seed": 7, "n_organic": 150, "n_customer": 20, "n_aggressive": 0}"#);
    ok(
        dir.path(),
        &["evaluate", "--corpus", "corpus.jsonl", "--reference", "corpus.jsonl", "--reference-label", "random", "--sweep", "100,10,1000", "--out", "e.json"],
    );
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("e.json")).unwrap()).unwrap();
    assert_eq!(report["queries"], 170);
    assert_eq!(report["reference_size"], 150);
    let bands: Vec<f64> = report["sweep"].as_array().unwrap().iter().map(|b| b["band"].as_f64().unwrap()).collect();
    assert_eq!(bands.len(), 3);
    assert!(report["detection"]["evaluation"]["recall"].is_number());
    let users: u64 = report["tolerance"].as_object().unwrap().values().map(|g| g["users"].as_u64().unwrap()).sum();
    assert_eq!(users, 150);
}
