use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn timetrail(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timetrail"))
        .args(args)
        .output()
        .expect("spawn timetrail")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn small_config(dir: &Path, out: &Path) -> String {
    write_config(
        dir,
        &format!(
            r#"{{"out_dir": {:?}, "generator": {{"target_rows": 10000, "fraud_rate": 0.0013}}}}"#,
            out.to_str().unwrap()
        ),
    )
}

#[test]
fn generate_injects_exact_fraud_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = small_config(tmp.path(), &out);
    let o = timetrail(&["generate", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("dataset_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["fraud_count"], 13);
    assert_eq!(summary["rows"], 10_000);
}

#[test]
fn missing_model_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = timetrail(&["evaluate", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_field_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"tresh": 0.5}"#);
    let o = timetrail(&["generate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn out_of_range_value_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"threshold": 1.5}"#);
    let o = timetrail(&["run-all", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(timetrail(&["no-such-stage"]).status.code(), Some(1));
    assert_eq!(timetrail(&["--help"]).status.code(), Some(0));
}

#[test]
fn stages_run_one_at_a_time() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = small_config(tmp.path(), &out);
    for stage in ["generate", "preprocess", "enrich", "correlate", "train", "evaluate", "explain", "plot"] {
        let o = timetrail(&[stage, "--config", &cfg]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let comparison = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let metrics: Vec<&str> = comparison.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        metrics,
        ["accuracy", "precision", "recall", "f1", "auc_roc", "average_precision", "tis"]
    );
    assert!(out.join("heatmap_all.svg").exists());
    assert!(out.join("tis_hist.svg").exists());
}

#[test]
fn run_all_is_deterministic_and_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let mut manifests = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let cfg = small_config(tmp.path(), &out);
        let o = timetrail(&["run-all", "--config", &cfg, "--seed", "9"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("auc_roc"), "comparison table missing from stdout");
        manifests.push(std::fs::read(out.join("manifest.json")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    let entries: Vec<Value> = serde_json::from_slice(&manifests[0]).unwrap();
    assert!(entries.len() >= 12, "{} artifacts", entries.len());
    for e in &entries {
        assert_eq!(e["sha256"].as_str().unwrap().len(), 64);
        assert!(e["stage"].is_string() && e["path"].is_string());
    }
}

#[test]
fn external_input_skips_generation() {
    let tmp = tempfile::tempdir().unwrap();
    let gen_out = tmp.path().join("gen");
    let cfg = small_config(tmp.path(), &gen_out);
    assert!(timetrail(&["generate", "--config", &cfg]).status.success());

    let out = tmp.path().join("ext");
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{"input": {:?}, "out_dir": {:?}}}"#,
            gen_out.join("dataset.csv").to_str().unwrap(),
            out.to_str().unwrap()
        ),
    );
    let o = timetrail(&["run-all", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let entries: Vec<Value> = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert!(entries.iter().all(|e| e["stage"] != "generate"));
    assert!(!out.join("dataset.csv").exists());
}
