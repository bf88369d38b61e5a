//! Classifiers: the boosted tree ensemble, the logistic baseline, and the
//! shared plumbing around them (feature tables, under-sampling, scoring,
//! serialization).

mod features;
pub mod gbt;
pub mod logistic;

pub use crate::domain::FeatureTable;
pub use features::{feature_table, FeatureSet, RAW_FEATURES};
pub use gbt::{train_gbt, train_gbt_traced, Branch, Ensemble, GbtConfig, Node, TrainingTrace, Tree};
pub use logistic::{loss_and_gradient, train_logistic, LogisticConfig, LogisticModel, LossGradient};

use crate::error::{invalid, Error, Result};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Probabilities are kept this far from 0 and 1 so log-odds stay finite.
pub const PROB_EPS: f64 = 1e-15;

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (p / (1.0 - p)).ln()
}

/// Log-loss of label `y` at margin `m`, written to stay finite for large |m|.
pub(crate) fn log_loss(y: f64, m: f64) -> f64 {
    let softplus = if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    };
    softplus - y * m
}

/// Anything that maps a named feature row to a log-odds margin.
pub trait Classifier {
    fn feature_names(&self) -> &[String];

    /// Raw log-odds for one row in training column order.
    fn margin(&self, row: &[f64]) -> f64;

    /// Margins for a table whose columns are matched by name.
    fn margins(&self, t: &FeatureTable) -> Result<Vec<f64>> {
        let aligned = t.aligned_to(self.feature_names())?;
        Ok(aligned.rows.iter().map(|r| self.margin(r)).collect())
    }

    fn predict_proba(&self, t: &FeatureTable) -> Result<Vec<f64>> {
        Ok(self
            .margins(t)?
            .into_iter()
            .map(|m| sigmoid(m).clamp(PROB_EPS, 1.0 - PROB_EPS))
            .collect())
    }
}

/// 1 where `prob >= threshold`.
pub fn classify(probs: &[f64], threshold: f64) -> Result<Vec<u8>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid("threshold", "must be in (0, 1)"));
    }
    Ok(probs.iter().map(|&p| (p >= threshold) as u8).collect())
}

/// Keep every minority row and `ceil(ratio · minority)` majority rows drawn
/// without replacement. Rows keep their original relative order. Returns
/// the reduced table and the indices kept.
pub fn undersample(t: &FeatureTable, majority_ratio: f64, seed: u64) -> Result<(FeatureTable, Vec<usize>)> {
    if !(majority_ratio >= 1.0) || !majority_ratio.is_finite() {
        return Err(invalid("majority_ratio", "must be a finite value >= 1"));
    }
    let labels = t
        .labels
        .as_ref()
        .ok_or_else(|| invalid("labels", "under-sampling requires a labeled table"))?;
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let minority_label = if positives * 2 <= labels.len() { 1 } else { 0 };
    let minority: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == minority_label).collect();
    let majority: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != minority_label).collect();
    if minority.is_empty() {
        return Err(Error::NoMinority);
    }
    let want = (majority_ratio * minority.len() as f64).ceil();
    let keep = if want >= majority.len() as f64 {
        majority.len()
    } else {
        want as usize
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<usize> = minority;
    kept.extend(sample(&mut rng, majority.len(), keep).into_iter().map(|k| majority[k]));
    kept.sort_unstable();
    Ok((t.select(&kept), kept))
}

/// A trained classifier of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Gbt(Ensemble),
    Logistic(LogisticModel),
}

impl Classifier for Model {
    fn feature_names(&self) -> &[String] {
        match self {
            Model::Gbt(m) => &m.feature_names,
            Model::Logistic(m) => &m.feature_names,
        }
    }

    fn margin(&self, row: &[f64]) -> f64 {
        match self {
            Model::Gbt(m) => m.margin(row),
            Model::Logistic(m) => m.margin(row),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(flatten)]
    model: Model,
}

impl Model {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(invalid(
                "format_version",
                format!("unsupported model format {}", file.format_version),
            ));
        }
        Ok(file.model)
    }

    pub fn as_ensemble(&self) -> Option<&Ensemble> {
        match self {
            Model::Gbt(m) => Some(m),
            Model::Logistic(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn imbalanced(legit: usize, fraud: usize) -> FeatureTable {
        let n = legit + fraud;
        let rows = (0..n).map(|i| vec![i as f64]).collect();
        let labels = (0..n).map(|i| (i % (n / fraud.max(1)) == 0 && i / (n / fraud.max(1)) < fraud) as u8).collect();
        FeatureTable::new(vec!["x".into()], rows, Some(labels)).unwrap()
    }

    #[test]
    fn undersample_counts() {
        let t = imbalanced(1000, 10);
        let (u, kept) = undersample(&t, 5.0, 1).unwrap();
        let labels = u.labels.unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 10);
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 50);
        assert!(kept.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(undersample(&t, 5.0, 1).unwrap().1, kept);
        assert_ne!(undersample(&t, 5.0, 2).unwrap().1, kept);
    }

    #[test]
    fn undersample_saturates_and_rejects() {
        let t = imbalanced(100, 10);
        assert_eq!(undersample(&t, 50.0, 0).unwrap().0.n_rows(), 110);
        let none = FeatureTable::new(vec!["x".into()], vec![vec![0.0]; 4], Some(vec![0; 4])).unwrap();
        assert!(matches!(undersample(&none, 2.0, 0), Err(Error::NoMinority)));
        assert!(undersample(&t, 0.5, 0).is_err());
    }

    #[test]
    fn classify_boundaries() {
        assert_eq!(classify(&[0.2, 0.5, 0.9], 0.5).unwrap(), [0, 1, 1]);
        assert_eq!(classify(&[0.2, 0.5, 0.9], f64::MIN_POSITIVE).unwrap(), [1, 1, 1]);
        assert_eq!(classify(&[0.2, 0.5, 0.9], 1.0 - f64::EPSILON).unwrap(), [0, 0, 0]);
        assert!(classify(&[0.5], 1.0).is_err());
    }

    #[test]
    fn sigmoid_logit_inverse_and_stable() {
        for m in [-30.0, -2.0, 0.0, 0.7, 8.0] {
            assert!((logit(sigmoid(m)) - m).abs() < 1e-9);
        }
        assert!(log_loss(1.0, 800.0).is_finite());
        assert!(log_loss(0.0, -800.0).abs() < 1e-300);
    }

    #[test]
    fn model_json_round_trip_and_version() {
        let m = Model::Logistic(LogisticModel {
            feature_names: vec!["a".into()],
            weights: vec![0.1 + 0.2],
            bias: -1.0 / 3.0,
        });
        let text = m.to_json().unwrap();
        assert!(text.contains("\"format_version\": 1"));
        assert!(text.contains("\"type\": \"logistic\""));
        assert_eq!(Model::from_json(&text).unwrap(), m);
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(Model::from_json(&bumped).is_err());
    }

    #[test]
    fn permuted_columns_score_identically() {
        let m = LogisticModel {
            feature_names: vec!["a".into(), "b".into()],
            weights: vec![2.0, -1.0],
            bias: 0.5,
        };
        let t = FeatureTable::new(vec!["a".into(), "b".into()], vec![vec![1.0, 3.0]], None).unwrap();
        let p = FeatureTable::new(vec!["b".into(), "a".into()], vec![vec![3.0, 1.0]], None).unwrap();
        assert_eq!(m.predict_proba(&t).unwrap(), m.predict_proba(&p).unwrap());
        let bad = FeatureTable::new(vec!["a".into(), "c".into()], vec![vec![1.0, 3.0]], None).unwrap();
        assert!(matches!(m.predict_proba(&bad), Err(Error::SchemaMismatch { .. })));
    }
}
