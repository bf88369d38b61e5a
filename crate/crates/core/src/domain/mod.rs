//! Transaction data model and the batch preprocessing steps applied before
//! enrichment: ingestion, cleansing, temporal segmentation, temporal
//! splitting and min-max scaling.

mod cleanse;
mod io;
mod scale;
mod segment;
mod split;

pub use cleanse::{cleanse, iqr_fences, CleansePolicy, CleanseReport, DedupKey};
pub use io::{format_timestamp, parse_timestamp, parse_transactions, write_transactions};
pub(crate) use io::{base_fields, base_header, parse_rows};
pub use scale::{apply_scaler, fit_scaler, FeatureRange, FeatureTable, ScalerParams};
pub use segment::{temporal_segment, Segment};
pub use split::{split_boundaries, temporal_split, SplitBoundaries, SplitPart};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxType {
    Purchase,
    Withdrawal,
    Transfer,
    Deposit,
}

impl TxType {
    pub const ALL: [TxType; 4] = [
        TxType::Purchase,
        TxType::Withdrawal,
        TxType::Transfer,
        TxType::Deposit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TxType::Purchase => "purchase",
            TxType::Withdrawal => "withdrawal",
            TxType::Transfer => "transfer",
            TxType::Deposit => "deposit",
        }
    }
}

impl fmt::Display for TxType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TxType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "purchase" => Ok(TxType::Purchase),
            "withdrawal" => Ok(TxType::Withdrawal),
            "transfer" => Ok(TxType::Transfer),
            "deposit" => Ok(TxType::Deposit),
            other => Err(format!("unknown transaction type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Legit,
    Fraud,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Legit => "legit",
            Label::Fraud => "fraud",
        }
    }

    pub fn is_fraud(self) -> bool {
        self == Label::Fraud
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "legit" | "0" => Ok(Label::Legit),
            "fraud" | "1" => Ok(Label::Fraud),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// One raw financial transaction.
///
/// `scenario` is an auxiliary tag written by the synthetic generator for
/// fraud rows; ingestion keeps it when the column is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub user_id: String,
    pub terminal_id: String,
    pub amount: f64,
    pub tx_type: TxType,
    pub label: Option<Label>,
    pub scenario: Option<String>,
}

impl Transaction {
    pub fn is_fraud(&self) -> bool {
        self.label.is_some_and(Label::is_fraud)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub row_count: usize,
    pub fraud_count: usize,
    /// `fraud_count / row_count`, present only when at least one row is labeled.
    pub fraud_rate: Option<f64>,
    pub t_min: Option<i64>,
    pub t_max: Option<i64>,
}

/// A time-ordered collection of transactions.
///
/// Rows are kept sorted by `(timestamp, tx_id)`; construct through
/// [`Dataset::new`] to get the ordering and the summary metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub transactions: Vec<Transaction>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(mut transactions: Vec<Transaction>) -> Self {
        transactions.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.tx_id.cmp(&b.tx_id))
        });
        let meta = DatasetMeta::of(&transactions);
        Dataset { transactions, meta }
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn has_scenarios(&self) -> bool {
        self.transactions.iter().any(|t| t.scenario.is_some())
    }
}

impl DatasetMeta {
    fn of(rows: &[Transaction]) -> Self {
        let row_count = rows.len();
        let fraud_count = rows.iter().filter(|t| t.is_fraud()).count();
        let labeled = rows.iter().any(|t| t.label.is_some());
        DatasetMeta {
            row_count,
            fraud_count,
            fraud_rate: (labeled && row_count > 0).then(|| fraud_count as f64 / row_count as f64),
            t_min: rows.iter().map(|t| t.timestamp).min(),
            t_max: rows.iter().map(|t| t.timestamp).max(),
        }
    }
}

#[cfg(test)]
pub(crate) fn tx(id: &str, ts: i64, user: &str, amount: f64) -> Transaction {
    Transaction {
        tx_id: id.to_string(),
        timestamp: ts,
        user_id: user.to_string(),
        terminal_id: "term0".to_string(),
        amount,
        tx_type: TxType::Purchase,
        label: Some(Label::Legit),
        scenario: None,
    }
}
