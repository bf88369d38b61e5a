//! Decision-path attribution for the tree ensemble.
//!
//! Every tree node carries the weight it would have as a leaf. Walking a
//! row from the root, each split moves the running value from the parent's
//! weight to the child's, and that change is credited to the split feature.
//! The root weights summed over trees form the bias, so bias plus all
//! credits telescopes to the leaf sum, which is exactly the raw margin.

use crate::domain::FeatureTable;
use crate::enrich::TEMPORAL_ATTRIBUTES;
use crate::error::Result;
use crate::model::{sigmoid, Branch, Classifier, Ensemble, LogisticModel, Model, Node, PROB_EPS};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContribution {
    pub feature_name: String,
    /// Signed log-odds.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub bias: f64,
    /// One entry per feature split on along any path taken, in model column order.
    pub contributions: Vec<FeatureContribution>,
}

impl Attribution {
    pub fn total(&self) -> f64 {
        self.bias + self.contributions.iter().map(|c| c.contribution).sum::<f64>()
    }
}

pub fn default_temporal_features() -> Vec<String> {
    TEMPORAL_ATTRIBUTES.iter().map(|s| s.to_string()).collect()
}

/// Model-level bias: the base score plus every tree's root weight.
pub fn ensemble_bias(m: &Ensemble) -> f64 {
    m.base_score + m.learning_rate * m.trees.iter().map(|t| t.root().value()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub tree: usize,
    pub feature: String,
    pub threshold: f64,
    pub branch: Branch,
    pub delta: f64,
}

/// Path steps for one row given in model column order, tree by tree and
/// root to leaf.
pub fn path_steps(m: &Ensemble, row: &[f64]) -> Vec<Step> {
    let mut steps = Vec::new();
    for (ti, tree) in m.trees.iter().enumerate() {
        let mut at = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
            value,
            ..
        } = tree.nodes[at]
        {
            let (branch, next) = if row[feature] < threshold {
                (Branch::Left, left)
            } else {
                (Branch::Right, right)
            };
            steps.push(Step {
                tree: ti,
                feature: m.feature_names[feature].clone(),
                threshold,
                branch,
                delta: m.learning_rate * (tree.nodes[next].value() - value),
            });
            at = next;
        }
    }
    steps
}

/// Attribution for one row already in model column order.
pub fn attribute_row(m: &Ensemble, row: &[f64]) -> Attribution {
    let mut per_feature: BTreeMap<usize, f64> = BTreeMap::new();
    for tree in &m.trees {
        let path = tree.path(row);
        for pair in path.windows(2) {
            if let Node::Split { feature, value, .. } = tree.nodes[pair[0]] {
                *per_feature.entry(feature).or_insert(0.0) +=
                    m.learning_rate * (tree.nodes[pair[1]].value() - value);
            }
        }
    }
    Attribution {
        bias: ensemble_bias(m),
        contributions: per_feature
            .into_iter()
            .map(|(j, c)| FeatureContribution {
                feature_name: m.feature_names[j].clone(),
                contribution: c,
            })
            .collect(),
    }
}

/// Models that can split a row's margin into a bias and per-feature credits.
pub trait Attributable: Classifier {
    /// Attribution for one row in model column order.
    fn attribute(&self, row: &[f64]) -> Attribution;
}

impl Attributable for Ensemble {
    fn attribute(&self, row: &[f64]) -> Attribution {
        attribute_row(self, row)
    }
}

/// A linear model credits `w_j · x_j` to feature `j`.
impl Attributable for LogisticModel {
    fn attribute(&self, row: &[f64]) -> Attribution {
        Attribution {
            bias: self.bias,
            contributions: self
                .feature_names
                .iter()
                .zip(&self.weights)
                .zip(row)
                .map(|((n, w), x)| FeatureContribution {
                    feature_name: n.clone(),
                    contribution: w * x,
                })
                .collect(),
        }
    }
}

impl Attributable for Model {
    fn attribute(&self, row: &[f64]) -> Attribution {
        match self {
            Model::Gbt(m) => m.attribute(row),
            Model::Logistic(m) => m.attribute(row),
        }
    }
}

/// Attributions for every row of a table, columns matched by name.
pub fn attribute_prediction(m: &Ensemble, t: &FeatureTable) -> Result<Vec<Attribution>> {
    let aligned = t.aligned_to(&m.feature_names)?;
    Ok(aligned.rows.iter().map(|r| attribute_row(m, r)).collect())
}

/// Share of absolute attribution mass carried by `temporal` features, or 0
/// when there is no mass at all.
pub fn tis(contribs: &[FeatureContribution], temporal: &[String]) -> f64 {
    let mut total = 0.0;
    let mut temp = 0.0;
    for c in contribs {
        let a = c.contribution.abs();
        total += a;
        if temporal.contains(&c.feature_name) {
            temp += a;
        }
    }
    if total > 0.0 {
        (temp / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSequence {
    pub tx_id: String,
    pub bias: f64,
    pub steps: Vec<Step>,
    pub margin: f64,
    pub probability: f64,
    pub tis: f64,
}

impl ExplanationSequence {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// The ordered path record for row `index` of `t`.
pub fn explanation_sequence(
    m: &Ensemble,
    tx_id: &str,
    t: &FeatureTable,
    index: usize,
    temporal: &[String],
) -> Result<ExplanationSequence> {
    let aligned = t.aligned_to(&m.feature_names)?;
    let row = &aligned.rows[index];
    let margin = m.margin(row);
    Ok(ExplanationSequence {
        tx_id: tx_id.to_string(),
        bias: ensemble_bias(m),
        steps: path_steps(m, row),
        margin,
        probability: sigmoid(margin).clamp(PROB_EPS, 1.0 - PROB_EPS),
        tis: tis(&attribute_row(m, row).contributions, temporal),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TisEntry {
    pub tx_id: String,
    pub tis: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TisReport {
    pub temporal_feature_set: Vec<String>,
    pub threshold: f64,
    pub per_tx: Vec<TisEntry>,
    /// Mean over flagged rows; `None` when nothing is flagged.
    pub aggregate_tis: Option<f64>,
}

impl TisReport {
    /// Mean TIS over the rows selected by `mask`, `None` if none are selected.
    pub fn mean_where(&self, mask: impl Fn(usize, &TisEntry) -> bool) -> Option<f64> {
        let (sum, n) = self
            .per_tx
            .iter()
            .enumerate()
            .filter(|(i, e)| mask(*i, e))
            .fold((0.0, 0usize), |(s, n), (_, e)| (s + e.tis, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn flagged_count(&self) -> usize {
        self.per_tx.iter().filter(|e| e.flagged).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-row TIS for every row and the mean over rows scoring at or above
/// `threshold`.
pub fn aggregate_tis<M: Attributable + ?Sized>(
    m: &M,
    tx_ids: &[String],
    t: &FeatureTable,
    temporal: &[String],
    threshold: f64,
) -> Result<TisReport> {
    if tx_ids.len() != t.n_rows() {
        return Err(crate::Error::LengthMismatch {
            left: tx_ids.len(),
            right: t.n_rows(),
        });
    }
    let aligned = t.aligned_to(m.feature_names())?;
    let per_tx: Vec<TisEntry> = aligned
        .rows
        .iter()
        .zip(tx_ids)
        .map(|(row, id)| {
            let p = sigmoid(m.margin(row)).clamp(PROB_EPS, 1.0 - PROB_EPS);
            TisEntry {
                tx_id: id.clone(),
                tis: tis(&m.attribute(row).contributions, temporal),
                flagged: p >= threshold,
            }
        })
        .collect();
    let mut report = TisReport {
        temporal_feature_set: temporal.to_vec(),
        threshold,
        per_tx,
        aggregate_tis: None,
    };
    report.aggregate_tis = report.mean_where(|_, e| e.flagged);
    Ok(report)
}
