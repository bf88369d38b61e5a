use timetrail_core::domain::{parse_transactions, temporal_split};
use timetrail_core::eval::{EvaluationReport, MetricName};
use timetrail_core::explain::ExplanationSequence;
use timetrail_core::pipeline::{run_all, sha256_hex, RunConfig, Stage};

fn config(dir: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig {
        out_dir: dir.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.generator.target_rows = 12_000;
    cfg
}

fn report(dir: &std::path::Path, name: &str) -> EvaluationReport {
    EvaluationReport::from_json(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn both_models_are_scored_on_the_same_test_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    run_all(&cfg).unwrap();
    let (b, t) = (
        report(dir.path(), "report_baseline.json"),
        report(dir.path(), "report_timetrail.json"),
    );
    assert_eq!(b.fingerprint, t.fingerprint);
    assert_eq!(b.rows, t.rows);
    assert_eq!(b.confusion.total(), t.confusion.total());

    // The test part is the last 20% by time of the cleansed data.
    let cleansed = parse_transactions(&std::fs::read_to_string(dir.path().join("cleansed.csv")).unwrap()).unwrap();
    let (_, _, test) = temporal_split(&cleansed, 0.6, 0.2).unwrap();
    assert_eq!(test.len(), b.rows);
    for m in MetricName::ALL {
        assert!(b.metrics.contains_key(&m) && t.metrics.contains_key(&m), "{}", m.as_str());
    }
}

#[test]
fn manifest_hashes_match_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_all(&config(dir.path())).unwrap();
    assert!(manifest.len() >= 12);
    for e in &manifest {
        let bytes = std::fs::read(dir.path().join(&e.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), e.sha256, "{}", e.path);
    }
    let stages: std::collections::BTreeSet<&str> = manifest.iter().map(|e| e.stage.as_str()).collect();
    assert_eq!(stages.len(), 8);
}

#[test]
fn explanations_are_complete_and_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    run_all(&cfg).unwrap();
    let mut seen = 0;
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name.starts_with("sequence_") && name.ends_with(".json") {
            let seq = ExplanationSequence::from_json(&std::fs::read_to_string(dir.path().join(&name)).unwrap()).unwrap();
            let total = seq.bias + seq.steps.iter().map(|s| s.delta).sum::<f64>();
            assert!((total - seq.margin).abs() < 1e-9, "{name}");
            assert!(seq.probability >= cfg.threshold);
            assert!((0.0..=1.0).contains(&seq.tis));
            assert!(dir.path().join(name.replace(".json", ".svg")).exists());
            seen += 1;
        }
    }
    assert!(seen > 0 && seen <= cfg.explain_top_k);
}

#[test]
fn a_stage_without_its_inputs_fails_as_io() {
    let dir = tempfile::tempdir().unwrap();
    let err = Stage::Train.run(&config(dir.path())).unwrap_err();
    assert!(err.is_io(), "{err}");
    assert!(err.to_string().contains("train"), "{err}");
}

#[test]
fn comparison_csv_lists_every_metric_in_order() {
    let dir = tempfile::tempdir().unwrap();
    run_all(&config(dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("metric,baseline,timetrail"));
    let names: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    let expected: Vec<&str> = MetricName::ALL.iter().map(|m| m.as_str()).collect();
    assert_eq!(names, expected);
}

#[test]
fn config_round_trips_and_rejects_unknown_fields() {
    let cfg = RunConfig::default();
    let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
    assert_eq!(back.to_json().unwrap(), cfg.to_json().unwrap());
    assert!(RunConfig::from_json(r#"{"undersample": 3}"#).is_err());
}
