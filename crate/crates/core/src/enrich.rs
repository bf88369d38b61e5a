//! Temporal enrichment: each transaction gains calendar fields, recency,
//! rolling per-user and per-terminal frequencies, and an amount ratio
//! against the user's recent history.
//!
//! Every rolling window is half-open, `(t - w, t]`, and includes the row
//! itself plus any other row sharing its timestamp. Nothing later than `t`
//! is ever read.

use crate::domain::{base_fields, base_header, parse_rows, Dataset, Transaction, TxType};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const HOUR: i64 = 3_600;
pub const DAY: i64 = 86_400;

/// Column names of the derived attributes, in export order.
pub const TEMPORAL_ATTRIBUTES: [&str; 9] = [
    "hour_of_day",
    "day_of_week",
    "is_night",
    "seconds_since_last_user_tx",
    "user_tx_count_24h",
    "user_tx_count_48h",
    "user_tx_count_7d",
    "terminal_tx_count_48h",
    "amount_over_user_mean_30d",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrichConfig {
    /// Recency value for a user's first transaction, and upper clamp.
    pub recency_cap_seconds: i64,
    /// Look-back for the amount ratio's mean.
    pub amount_history_seconds: i64,
    /// Added to numerator and denominator of the amount ratio so it stays
    /// positive and finite for zero amounts.
    pub amount_smoothing: f64,
    /// Hours `[0, night_end_hour)` count as night.
    pub night_end_hour: u8,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        EnrichConfig {
            recency_cap_seconds: 30 * DAY,
            amount_history_seconds: 30 * DAY,
            amount_smoothing: 0.01,
            night_end_hour: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalAttributes {
    pub hour_of_day: u8,
    /// 0 = Monday.
    pub day_of_week: u8,
    pub is_night: u8,
    pub seconds_since_last_user_tx: i64,
    pub user_tx_count_24h: u32,
    pub user_tx_count_48h: u32,
    pub user_tx_count_7d: u32,
    pub terminal_tx_count_48h: u32,
    pub amount_over_user_mean_30d: f64,
}

impl TemporalAttributes {
    pub fn values(&self) -> [f64; 9] {
        [
            self.hour_of_day as f64,
            self.day_of_week as f64,
            self.is_night as f64,
            self.seconds_since_last_user_tx as f64,
            self.user_tx_count_24h as f64,
            self.user_tx_count_48h as f64,
            self.user_tx_count_7d as f64,
            self.terminal_tx_count_48h as f64,
            self.amount_over_user_mean_30d,
        ]
    }

    fn from_values(v: &[f64]) -> Self {
        TemporalAttributes {
            hour_of_day: v[0] as u8,
            day_of_week: v[1] as u8,
            is_night: v[2] as u8,
            seconds_since_last_user_tx: v[3] as i64,
            user_tx_count_24h: v[4] as u32,
            user_tx_count_48h: v[5] as u32,
            user_tx_count_7d: v[6] as u32,
            terminal_tx_count_48h: v[7] as u32,
            amount_over_user_mean_30d: v[8],
        }
    }
}

/// Contextual fields linked to the temporal attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxContext<'a> {
    pub tx_type: TxType,
    pub terminal_id: &'a str,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedTransaction {
    pub base: Transaction,
    pub attrs: TemporalAttributes,
}

impl EnrichedTransaction {
    pub fn context(&self) -> TxContext<'_> {
        TxContext {
            tx_type: self.base.tx_type,
            terminal_id: &self.base.terminal_id,
            amount: self.base.amount,
        }
    }

    /// Numeric value of a temporal attribute, `amount`, or `timestamp` by name.
    pub fn attribute(&self, name: &str) -> Option<f64> {
        match name {
            "amount" => Some(self.base.amount),
            "timestamp" => Some(self.base.timestamp as f64),
            _ => TEMPORAL_ATTRIBUTES
                .iter()
                .position(|a| *a == name)
                .map(|i| self.attrs.values()[i]),
        }
    }
}

pub fn hour_of_day(ts: i64) -> u8 {
    (ts.rem_euclid(DAY) / HOUR) as u8
}

/// 0 = Monday. 1970-01-01 was a Thursday.
pub fn day_of_week(ts: i64) -> u8 {
    (ts.div_euclid(DAY) + 3).rem_euclid(7) as u8
}

fn check_sorted(rows: &[Transaction]) -> Result<()> {
    match rows.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        Some(i) => Err(Error::Unsorted { index: i + 1 }),
        None => Ok(()),
    }
}

fn group_by<'a>(rows: &'a [Transaction], key: impl Fn(&'a Transaction) -> &'a str) -> HashMap<&'a str, Vec<usize>> {
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, t) in rows.iter().enumerate() {
        groups.entry(key(t)).or_default().push(i);
    }
    groups
}

/// For one time-sorted group, the `[lo, hi)` positions of rows inside
/// `(t - w, t]` for every member, found with a two-pointer sweep.
fn window_bounds(ts: &[i64], window: i64) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(ts.len());
    let (mut lo, mut hi) = (0, 0);
    for &t in ts {
        while ts[lo] <= t - window {
            lo += 1;
        }
        while hi < ts.len() && ts[hi] <= t {
            hi += 1;
        }
        out.push((lo, hi));
    }
    out
}

fn rolling_counts_by<'a>(
    rows: &'a [Transaction],
    window_seconds: i64,
    key: impl Fn(&'a Transaction) -> &'a str,
) -> Vec<u32> {
    let mut counts = vec![0u32; rows.len()];
    for members in group_by(rows, key).values() {
        let ts: Vec<i64> = members.iter().map(|&i| rows[i].timestamp).collect();
        for (&i, (lo, hi)) in members.iter().zip(window_bounds(&ts, window_seconds)) {
            counts[i] = (hi - lo) as u32;
        }
    }
    counts
}

/// Per row, the number of the same user's transactions in `(t - w, t]`.
pub fn rolling_user_counts(d: &Dataset, window_seconds: i64) -> Result<Vec<u32>> {
    check_sorted(&d.transactions)?;
    Ok(rolling_counts_by(&d.transactions, window_seconds, |t| &t.user_id))
}

pub fn rolling_terminal_counts(d: &Dataset, window_seconds: i64) -> Result<Vec<u32>> {
    check_sorted(&d.transactions)?;
    Ok(rolling_counts_by(&d.transactions, window_seconds, |t| &t.terminal_id))
}

/// Recency and amount ratio for every row of one user's time-sorted history.
fn user_history_attrs(rows: &[Transaction], members: &[usize], cfg: &EnrichConfig) -> Vec<(i64, f64)> {
    let ts: Vec<i64> = members.iter().map(|&i| rows[i].timestamp).collect();
    let mut out = Vec::with_capacity(members.len());
    let mut hist_lo = 0;
    let mut tie_start = 0;
    for (k, &t) in ts.iter().enumerate() {
        if ts[tie_start] != t {
            tie_start = k;
        }
        let tie_end = k + ts[k..].iter().take_while(|&&s| s == t).count();

        let recency = if tie_end - tie_start > 1 {
            0
        } else if tie_start > 0 {
            (t - ts[tie_start - 1]).min(cfg.recency_cap_seconds)
        } else {
            cfg.recency_cap_seconds
        };

        while ts[hist_lo] <= t - cfg.amount_history_seconds {
            hist_lo += 1;
        }
        let prior = &members[hist_lo.min(tie_start)..tie_start];
        let ratio = if prior.is_empty() {
            1.0
        } else {
            let sum: f64 = prior.iter().map(|&i| rows[i].amount).sum();
            let mean = sum / prior.len() as f64;
            (rows[members[k]].amount + cfg.amount_smoothing) / (mean + cfg.amount_smoothing)
        };
        out.push((recency, ratio));
    }
    out
}

/// Enrich a time-sorted slice of transactions; output order equals input order.
pub fn enrich_rows(rows: &[Transaction], cfg: &EnrichConfig) -> Result<Vec<EnrichedTransaction>> {
    check_sorted(rows)?;
    let c24 = rolling_counts_by(rows, DAY, |t| &t.user_id);
    let c48 = rolling_counts_by(rows, 2 * DAY, |t| &t.user_id);
    let c7d = rolling_counts_by(rows, 7 * DAY, |t| &t.user_id);
    let term48 = rolling_counts_by(rows, 2 * DAY, |t| &t.terminal_id);

    let mut recency = vec![0i64; rows.len()];
    let mut ratio = vec![1.0f64; rows.len()];
    for members in group_by(rows, |t| &t.user_id).values() {
        for (&i, (r, a)) in members.iter().zip(user_history_attrs(rows, members, cfg)) {
            recency[i] = r;
            ratio[i] = a;
        }
    }

    Ok(rows
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let hour = hour_of_day(t.timestamp);
            EnrichedTransaction {
                base: t.clone(),
                attrs: TemporalAttributes {
                    hour_of_day: hour,
                    day_of_week: day_of_week(t.timestamp),
                    is_night: (hour < cfg.night_end_hour) as u8,
                    seconds_since_last_user_tx: recency[i],
                    user_tx_count_24h: c24[i],
                    user_tx_count_48h: c48[i],
                    user_tx_count_7d: c7d[i],
                    terminal_tx_count_48h: term48[i],
                    amount_over_user_mean_30d: ratio[i],
                },
            }
        })
        .collect())
}

pub fn enrich(d: &Dataset, cfg: &EnrichConfig) -> Result<Vec<EnrichedTransaction>> {
    enrich_rows(&d.transactions, cfg)
}

/// Base transaction columns followed by the nine attribute columns.
pub fn write_enriched(rows: &[EnrichedTransaction]) -> Result<String> {
    let with_scenario = rows.iter().any(|r| r.base.scenario.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = base_header(with_scenario);
    header.extend(TEMPORAL_ATTRIBUTES);
    w.write_record(&header)?;
    for r in rows {
        let mut fields = base_fields(&r.base, with_scenario);
        fields.extend(r.attrs.values().iter().map(|v| v.to_string()));
        w.write_record(&fields)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_enriched(csv_text: &str) -> Result<Vec<EnrichedTransaction>> {
    Ok(parse_rows(csv_text, &TEMPORAL_ATTRIBUTES)?
        .into_iter()
        .map(|(base, v)| EnrichedTransaction {
            base,
            attrs: TemporalAttributes::from_values(&v),
        })
        .collect())
}
