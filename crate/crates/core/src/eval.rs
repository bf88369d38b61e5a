//! Classification metrics and the side-by-side comparison of two models
//! scored on the same test rows. Fraud (label 1) is the positive class.
//! Metrics with a zero denominator are undefined (`None`), never zero.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2·tp / (2·tp + fp + fn)`, the harmonic mean of precision and recall
    /// written over counts. It stays defined when nothing is flagged but
    /// frauds exist (value 0), and is undefined only with no positives on
    /// either side.
    pub fn f1(&self) -> Option<f64> {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

pub fn confusion(labels: &[u8], preds: &[u8]) -> Result<ConfusionMatrix> {
    check_lengths(labels.len(), preds.len())?;
    let mut cm = ConfusionMatrix::default();
    for (&l, &p) in labels.iter().zip(preds) {
        match (l, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (0, 0) => cm.tn += 1,
            (1, 0) => cm.fn_ += 1,
            _ => {
                return Err(crate::error::invalid("labels", "labels and predictions must be 0 or 1"));
            }
        }
    }
    Ok(cm)
}

/// Indices sorted by descending score, grouped into runs of equal score.
fn descending_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Mann-Whitney AUC from mid-ranks: ties between a positive and a negative
/// count one half.
pub fn auc_roc(labels: &[u8], scores: &[f64]) -> Result<Option<f64>> {
    check_lengths(labels.len(), scores.len())?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut groups = descending_groups(scores);
    groups.reverse();
    let mut rank_sum = 0.0;
    let mut below = 0usize;
    for g in &groups {
        let mid = below as f64 + (g.len() as f64 + 1.0) / 2.0;
        rank_sum += mid * g.iter().filter(|&&i| labels[i] == 1).count() as f64;
        below += g.len();
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(Some(u / (pos as f64 * neg as f64)))
}

/// ROC points `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one per distinct score.
pub fn roc_curve(labels: &[u8], scores: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_lengths(labels.len(), scores.len())?;
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    for g in descending_groups(scores) {
        for i in g {
            if labels[i] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
        pts.push((
            if neg > 0.0 { fp / neg } else { 0.0 },
            if pos > 0.0 { tp / pos } else { 0.0 },
        ));
    }
    Ok(pts)
}

/// Trapezoidal area under a piecewise-linear curve.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// `Σ (R_k − R_{k−1}) · P_k` over the descending-score sweep, where every
/// row sharing a score enters at the same step.
pub fn average_precision(labels: &[u8], scores: &[f64]) -> Result<Option<f64>> {
    check_lengths(labels.len(), scores.len())?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 {
        return Ok(None);
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for g in descending_groups(scores) {
        seen += g.len();
        tp += g.iter().filter(|&&i| labels[i] == 1).count();
        let recall = tp as f64 / pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    Ok(Some(ap))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Precision and recall at each distinct score used as an inclusive threshold,
/// in ascending threshold order.
pub fn threshold_sweep(labels: &[u8], scores: &[f64]) -> Result<Vec<SweepPoint>> {
    check_lengths(labels.len(), scores.len())?;
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    for g in descending_groups(scores) {
        let threshold = scores[g[0]];
        for i in g {
            if labels[i] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        out.push(SweepPoint {
            threshold,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, pos),
        });
    }
    out.reverse();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Accuracy,
    Precision,
    Recall,
    F1,
    AucRoc,
    AveragePrecision,
    Tis,
}

impl MetricName {
    pub const ALL: [MetricName; 7] = [
        MetricName::Accuracy,
        MetricName::Precision,
        MetricName::Recall,
        MetricName::F1,
        MetricName::AucRoc,
        MetricName::AveragePrecision,
        MetricName::Tis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Accuracy => "accuracy",
            MetricName::Precision => "precision",
            MetricName::Recall => "recall",
            MetricName::F1 => "f1",
            MetricName::AucRoc => "auc_roc",
            MetricName::AveragePrecision => "average_precision",
            MetricName::Tis => "tis",
        }
    }
}

/// SHA-256 over the newline-joined transaction ids of a test set.
pub fn fingerprint(tx_ids: &[String]) -> String {
    let mut h = Sha256::new();
    for id in tx_ids {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub threshold: f64,
    pub rows: usize,
    pub fingerprint: String,
    pub confusion: ConfusionMatrix,
    /// A metric that was computed but undefined is stored as `None`.
    pub metrics: BTreeMap<MetricName, Option<f64>>,
}

impl EvaluationReport {
    pub fn metric(&self, name: MetricName) -> Option<f64> {
        self.metrics.get(&name).copied().flatten()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Score a model's probabilities on a labeled test set. `tis` is the
/// aggregate interpretability score when one was computed.
pub fn evaluate(
    model: &str,
    tx_ids: &[String],
    labels: &[u8],
    scores: &[f64],
    threshold: f64,
    tis: Option<Option<f64>>,
) -> Result<EvaluationReport> {
    check_lengths(tx_ids.len(), labels.len())?;
    let preds = crate::model::classify(scores, threshold)?;
    let cm = confusion(labels, &preds)?;
    let mut metrics = BTreeMap::new();
    metrics.insert(MetricName::Accuracy, cm.accuracy());
    metrics.insert(MetricName::Precision, cm.precision());
    metrics.insert(MetricName::Recall, cm.recall());
    metrics.insert(MetricName::F1, cm.f1());
    metrics.insert(MetricName::AucRoc, auc_roc(labels, scores)?);
    metrics.insert(MetricName::AveragePrecision, average_precision(labels, scores)?);
    if let Some(t) = tis {
        metrics.insert(MetricName::Tis, t);
    }
    Ok(EvaluationReport {
        model: model.to_string(),
        threshold,
        rows: labels.len(),
        fingerprint: fingerprint(tx_ids),
        confusion: cm,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: MetricName,
    pub baseline: Option<f64>,
    pub timetrail: Option<f64>,
}

impl ComparisonRow {
    pub fn delta(&self) -> Option<f64> {
        Some(self.timetrail? - self.baseline?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ComparisonTable {
    pub fn get(&self, metric: MetricName) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "baseline", "timetrail"])?;
        for r in &self.rows {
            w.write_record([r.metric.as_str().to_string(), cell(r.baseline), cell(r.timetrail)])?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Fixed-width table with four decimals; undefined cells print `n/a`.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
        let mut out = format!("{:<18} {:>10} {:>10} {:>10}\n", "metric", "baseline", "timetrail", "delta");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<18} {:>10} {:>10} {:>10}",
                r.metric.as_str(),
                fmt(r.baseline),
                fmt(r.timetrail),
                r.delta().map(|d| format!("{d:+.4}")).unwrap_or_else(|| "n/a".into())
            );
        }
        out
    }
}

/// Side-by-side table. Both reports must come from the same test rows and
/// carry the same metric set.
pub fn compare(baseline: &EvaluationReport, timetrail: &EvaluationReport) -> Result<ComparisonTable> {
    if baseline.fingerprint != timetrail.fingerprint {
        return Err(Error::FingerprintMismatch {
            baseline: baseline.fingerprint.clone(),
            timetrail: timetrail.fingerprint.clone(),
        });
    }
    let mut rows = Vec::new();
    for m in MetricName::ALL {
        match (baseline.metrics.get(&m), timetrail.metrics.get(&m)) {
            (Some(&b), Some(&t)) => rows.push(ComparisonRow {
                metric: m,
                baseline: b,
                timetrail: t,
            }),
            (None, None) => {}
            (None, Some(_)) => {
                return Err(Error::MissingMetric {
                    metric: m.as_str().to_string(),
                    side: "baseline".into(),
                })
            }
            (Some(_), None) => {
                return Err(Error::MissingMetric {
                    metric: m.as_str().to_string(),
                    side: "timetrail".into(),
                })
            }
        }
    }
    Ok(ComparisonTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_hand_count() {
        let cm = confusion(&[1, 1, 1, 0], &[1, 1, 0, 1]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 2, fp: 1, tn: 0, fn_: 1 });
        assert_eq!(cm.precision(), Some(2.0 / 3.0));
        assert_eq!(cm.recall(), Some(2.0 / 3.0));
        assert!((cm.f1().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cm.accuracy(), Some(0.5));
        assert!(confusion(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn zero_denominators_are_undefined() {
        let cm = confusion(&[1, 0, 0], &[0, 0, 0]).unwrap();
        assert_eq!((cm.tp, cm.fp), (0, 0));
        assert_eq!(cm.precision(), None);
        assert_eq!(cm.f1(), Some(0.0));
        assert_eq!(confusion(&[0, 0], &[0, 0]).unwrap().f1(), None);
        assert_eq!(ConfusionMatrix::default().accuracy(), None);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0, 0, 1, 1], &[0.1, 0.4, 0.35, 0.8]).unwrap(), Some(0.75));
        assert_eq!(auc_roc(&[0, 1], &[0.1, 0.9]).unwrap(), Some(1.0));
        assert_eq!(auc_roc(&[0, 1, 0, 1], &[0.3; 4]).unwrap(), Some(0.5));
        assert_eq!(auc_roc(&[1, 1], &[0.3, 0.4]).unwrap(), None);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[1, 0], &[0.2, 0.9]).unwrap(), Some(0.5));
        assert_eq!(average_precision(&[0, 1, 0], &[0.1, 0.9, 0.3]).unwrap(), Some(1.0));
        assert_eq!(average_precision(&[0, 0], &[0.1, 0.9]).unwrap(), None);
    }

    fn report(name: &str, vals: &[(MetricName, Option<f64>)]) -> EvaluationReport {
        EvaluationReport {
            model: name.into(),
            threshold: 0.5,
            rows: 4,
            fingerprint: fingerprint(&["a".into(), "b".into()]),
            confusion: ConfusionMatrix::default(),
            metrics: vals.iter().copied().collect(),
        }
    }

    #[test]
    fn reference_table_renders() {
        use MetricName::*;
        let b = report(
            "baseline",
            &[(Accuracy, Some(0.80)), (Precision, Some(0.39)), (Recall, Some(0.74)), (F1, Some(0.50)), (AucRoc, Some(0.78))],
        );
        let t = report(
            "timetrail",
            &[(Accuracy, Some(0.99)), (Precision, Some(0.99)), (Recall, Some(0.96)), (F1, Some(0.98)), (AucRoc, Some(0.98))],
        );
        let table = compare(&b, &t).unwrap();
        assert_eq!(table.rows.len(), 5);
        let csv = table.to_csv().unwrap();
        assert_eq!(csv.lines().next(), Some("metric,baseline,timetrail"));
        assert!(csv.contains("f1,0.5,0.98"));
        assert!(table.to_text().contains("+0.4800"));
        let same = compare(&t, &t).unwrap();
        assert!(same.rows.iter().all(|r| r.delta() == Some(0.0)));
    }

    #[test]
    fn compare_rejects_missing_metric_and_other_split() {
        use MetricName::*;
        let b = report("b", &[(F1, Some(0.5))]);
        let t = report("t", &[(F1, Some(0.5)), (AveragePrecision, None)]);
        match compare(&b, &t) {
            Err(Error::MissingMetric { metric, side }) => {
                assert_eq!(metric, "average_precision");
                assert_eq!(side, "baseline");
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut other = b.clone();
        other.fingerprint = fingerprint(&["z".into()]);
        assert!(matches!(compare(&b, &other), Err(Error::FingerprintMismatch { .. })));
    }

    #[test]
    fn report_json_keeps_undefined_as_null() {
        let r = evaluate("m", &["a".into(), "b".into()], &[0, 0], &[0.1, 0.2], 0.5, Some(None)).unwrap();
        let text = r.to_json().unwrap();
        assert!(text.contains("\"precision\": null"));
        assert!(text.contains("\"tis\": null"));
        assert_eq!(EvaluationReport::from_json(&text).unwrap(), r);
    }

    proptest! {
        #[test]
        fn f1_is_harmonic_mean_when_defined(tp in 0u64..50, fp in 0u64..50, tn in 0u64..50, fn_ in 0u64..50) {
            let cm = ConfusionMatrix { tp, fp, tn, fn_ };
            if let (Some(p), Some(r)) = (cm.precision(), cm.recall()) {
                let h = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
                prop_assert!((cm.f1().unwrap() - h).abs() < 1e-12);
            }
            for v in [cm.precision(), cm.recall(), cm.f1(), cm.accuracy()].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn auc_matches_trapezoid_and_antisymmetry(
            data in proptest::collection::vec((0u8..2, 0u8..6), 2..120)
        ) {
            let labels: Vec<u8> = data.iter().map(|d| d.0).collect();
            let scores: Vec<f64> = data.iter().map(|d| d.1 as f64 / 5.0).collect();
            if let Some(a) = auc_roc(&labels, &scores).unwrap() {
                prop_assert!((0.0..=1.0).contains(&a));
                let trap = trapezoid_area(&roc_curve(&labels, &scores).unwrap());
                prop_assert!((a - trap).abs() < 1e-9);
                let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
                prop_assert!((a + auc_roc(&labels, &neg).unwrap().unwrap() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn recall_falls_as_threshold_rises(
            data in proptest::collection::vec((0u8..2, 0.0f64..1.0), 1..100)
        ) {
            let labels: Vec<u8> = data.iter().map(|d| d.0).collect();
            let scores: Vec<f64> = data.iter().map(|d| d.1).collect();
            let sweep = threshold_sweep(&labels, &scores).unwrap();
            for w in sweep.windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[1].recall <= w[0].recall);
            }
            for p in &sweep {
                for v in [p.precision, p.recall].into_iter().flatten() {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
