use super::{log_loss, logit, sigmoid, Classifier};
use crate::domain::FeatureTable;
use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    /// L2 penalty on the weights; the bias is not penalized.
    pub l2: f64,
    /// Stop once the gradient's Euclidean norm falls below this.
    pub tolerance: f64,
    pub max_epochs: usize,
    pub initial_step: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 1e-3,
            tolerance: 1e-6,
            max_epochs: 5_000,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Classifier for LogisticModel {
    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn margin(&self, row: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

/// Objective value and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LossGradient {
    pub fn norm(&self) -> f64 {
        (self.bias * self.bias + self.weights.iter().map(|g| g * g).sum::<f64>()).sqrt()
    }
}

/// Mean log-loss plus `l2/2 · ‖w‖²`, and its gradient in `(w, b)`.
pub fn loss_and_gradient(rows: &[Vec<f64>], y: &[f64], weights: &[f64], bias: f64, l2: f64) -> LossGradient {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (row, &yi) in rows.iter().zip(y) {
        let m = bias + weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
        loss += log_loss(yi, m);
        let r = sigmoid(m) - yi;
        gb += r;
        for (g, x) in gw.iter_mut().zip(row) {
            *g += r * x;
        }
    }
    let reg = 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    LossGradient {
        loss: loss / n + reg,
        weights: gw,
        bias: gb / n,
    }
}

/// Full-batch gradient descent with Armijo backtracking. The step grows
/// back after each accepted move so flat stretches are not crawled.
pub fn train_logistic(t: &FeatureTable, cfg: &LogisticConfig) -> Result<LogisticModel> {
    if !(cfg.l2 >= 0.0) {
        return Err(invalid("l2", "must be non-negative"));
    }
    if !(cfg.initial_step > 0.0) {
        return Err(invalid("initial_step", "must be positive"));
    }
    let labels = super::gbt::labels_of(t)?;
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let prior = y.iter().sum::<f64>() / y.len() as f64;

    let mut w = vec![0.0; t.n_features()];
    let mut b = logit(prior);
    let mut step = cfg.initial_step;
    let mut cur = loss_and_gradient(&t.rows, &y, &w, b, cfg.l2);

    for _ in 0..cfg.max_epochs {
        let gnorm2 = cur.norm().powi(2);
        if gnorm2.sqrt() < cfg.tolerance {
            break;
        }
        loop {
            let w_new: Vec<f64> = w.iter().zip(&cur.weights).map(|(wi, gi)| wi - step * gi).collect();
            let b_new = b - step * cur.bias;
            let next = loss_and_gradient(&t.rows, &y, &w_new, b_new, cfg.l2);
            if next.loss <= cur.loss - 0.5 * step * gnorm2 {
                w = w_new;
                b = b_new;
                cur = next;
                step = (step * 2.0).min(cfg.initial_step * 1e3);
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return Ok(LogisticModel {
                    feature_names: t.feature_names.clone(),
                    weights: w,
                    bias: b,
                });
            }
        }
    }
    Ok(LogisticModel {
        feature_names: t.feature_names.clone(),
        weights: w,
        bias: b,
    })
}
