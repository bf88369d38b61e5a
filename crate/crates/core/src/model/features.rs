use crate::domain::{FeatureTable, TxType};
use crate::enrich::{EnrichedTransaction, TEMPORAL_ATTRIBUTES};
use serde::{Deserialize, Serialize};

/// Non-temporal columns shared by both models: the amount and a one-hot
/// encoding of the transaction type.
pub const RAW_FEATURES: [&str; 5] = [
    "amount",
    "type_purchase",
    "type_withdrawal",
    "type_transfer",
    "type_deposit",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// Raw transaction fields only, for the parity baseline.
    Raw,
    /// Raw fields plus every temporal attribute.
    Enriched,
}

impl FeatureSet {
    pub fn names(self) -> Vec<String> {
        let raw = RAW_FEATURES.iter();
        match self {
            FeatureSet::Raw => raw.map(|s| s.to_string()).collect(),
            FeatureSet::Enriched => raw
                .chain(TEMPORAL_ATTRIBUTES.iter())
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

fn raw_values(e: &EnrichedTransaction) -> [f64; 5] {
    let mut v = [e.base.amount, 0.0, 0.0, 0.0, 0.0];
    let slot = TxType::ALL.iter().position(|&t| t == e.base.tx_type).unwrap();
    v[1 + slot] = 1.0;
    v
}

/// Build the model matrix. Labels are attached only when every row has one.
pub fn feature_table(rows: &[EnrichedTransaction], set: FeatureSet) -> FeatureTable {
    let matrix = rows
        .iter()
        .map(|e| {
            let mut r = raw_values(e).to_vec();
            if set == FeatureSet::Enriched {
                r.extend_from_slice(&e.attrs.values());
            }
            r
        })
        .collect();
    let labels: Option<Vec<u8>> = rows
        .iter()
        .map(|e| e.base.label.map(|l| l.is_fraud() as u8))
        .collect();
    FeatureTable {
        feature_names: set.names(),
        rows: matrix,
        labels,
    }
}
