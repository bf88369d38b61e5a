use super::{Dataset, Transaction};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Which fields identify a duplicate row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupKey {
    #[default]
    TxId,
    /// `(user_id, timestamp, amount, terminal_id)`, for feeds without ids.
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleansePolicy {
    pub dedup_key: DedupKey,
    /// Multiplier on the inter-quartile range for the amount fences.
    pub iqr_k: f64,
    /// When false, amount outliers are kept and `outliers_removed` stays 0.
    pub remove_outliers: bool,
}

impl Default for CleansePolicy {
    fn default() -> Self {
        CleansePolicy {
            dedup_key: DedupKey::TxId,
            iqr_k: 3.0,
            remove_outliers: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanseReport {
    pub duplicates_removed: usize,
    pub missing_dropped: usize,
    pub outliers_removed: usize,
    pub retained: usize,
}

/// Linear-interpolation quantile on a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Lower and upper Tukey fences `Q1 - k·IQR`, `Q3 + k·IQR`. `None` on empty input.
pub fn iqr_fences(values: &[f64], k: f64) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    Some((q1 - k * iqr, q3 + k * iqr))
}

fn is_missing(t: &Transaction, key: DedupKey) -> bool {
    t.user_id.trim().is_empty()
        || t.terminal_id.trim().is_empty()
        || (key == DedupKey::TxId && t.tx_id.trim().is_empty())
}

/// Drop rows with missing identifiers, then duplicates (first occurrence in
/// time order wins), then amount outliers outside the IQR fences.
pub fn cleanse(d: &Dataset, policy: &CleansePolicy) -> (Dataset, CleanseReport) {
    let mut report = CleanseReport::default();

    let present: Vec<&Transaction> = d
        .transactions
        .iter()
        .filter(|t| {
            let missing = is_missing(t, policy.dedup_key);
            report.missing_dropped += missing as usize;
            !missing
        })
        .collect();

    let mut seen_ids = HashSet::new();
    let mut seen_composite = HashSet::new();
    let unique: Vec<&Transaction> = present
        .into_iter()
        .filter(|t| {
            let fresh = match policy.dedup_key {
                DedupKey::TxId => seen_ids.insert(t.tx_id.as_str()),
                DedupKey::Composite => seen_composite.insert((
                    t.user_id.as_str(),
                    t.timestamp,
                    t.amount.to_bits(),
                    t.terminal_id.as_str(),
                )),
            };
            report.duplicates_removed += !fresh as usize;
            fresh
        })
        .collect();

    let fences = if policy.remove_outliers {
        let amounts: Vec<f64> = unique.iter().map(|t| t.amount).collect();
        iqr_fences(&amounts, policy.iqr_k)
    } else {
        None
    };
    let kept: Vec<Transaction> = unique
        .into_iter()
        .filter(|t| {
            let outlier = fences.is_some_and(|(lo, hi)| t.amount < lo || t.amount > hi);
            report.outliers_removed += outlier as usize;
            !outlier
        })
        .cloned()
        .collect();

    report.retained = kept.len();
    (Dataset::new(kept), report)
}
