//! Gradient-boosted decision trees with logistic loss.
//!
//! Each round fits one tree to the first and second derivatives of the
//! log-loss at the current margins. Splits are exact: every midpoint
//! between consecutive distinct feature values is a candidate, scored by
//! the L2-regularized second-order gain. Ties in gain keep the candidate
//! seen first, i.e. the lower feature index, then the lower threshold.

use super::{log_loss, logit, sigmoid, Classifier};
use crate::domain::FeatureTable;
use crate::error::{invalid, Error, Result};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum hessian sum in each child of a split.
    pub min_child_weight: f64,
    /// A split must improve the objective by strictly more than this.
    pub min_split_gain: f64,
    /// Leaf weights are clamped to `[-leaf_clamp, leaf_clamp]`.
    pub leaf_clamp: f64,
    /// Fraction of rows drawn without replacement per tree; 1.0 uses all.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_trees: 200,
            max_depth: 4,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
            min_split_gain: 0.0,
            leaf_clamp: 10.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbtConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(invalid("learning_rate", "must be positive"));
        }
        if !(self.lambda >= 0.0) {
            return Err(invalid("lambda", "must be non-negative"));
        }
        if !(self.leaf_clamp > 0.0) {
            return Err(invalid("leaf_clamp", "must be positive"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(invalid("subsample", "must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Arena node. `value` on a split node is the weight the node would carry
/// as a leaf; decision-path attribution credits child-minus-parent deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with `x < threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        value: f64,
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn value(&self) -> f64 {
        match *self {
            Node::Split { value, .. } | Node::Leaf { value, .. } => value,
        }
    }
}

/// Branch taken at a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    /// Node indices visited from the root to the leaf for `row`.
    pub fn path(&self, row: &[f64]) -> Vec<usize> {
        let mut out = vec![0];
        let mut at = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = self.nodes[at]
        {
            at = if row[feature] < threshold { left } else { right };
            out.push(at);
        }
        out
    }

    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[feature] < threshold { left } else { right },
                Node::Leaf { value, .. } => return value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, at: usize) -> usize {
            match t.nodes[at] {
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub feature_names: Vec<String>,
    /// Initial log-odds, the training prior.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl Classifier for Ensemble {
    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn margin(&self, row: &[f64]) -> f64 {
        self.base_score
            + self.learning_rate * self.trees.iter().map(|t| t.leaf_value(row)).sum::<f64>()
    }
}

/// Mean training log-loss before boosting and after each round.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub losses: Vec<f64>,
}

pub fn train_gbt(t: &FeatureTable, cfg: &GbtConfig) -> Result<Ensemble> {
    train_gbt_traced(t, cfg).map(|(m, _)| m)
}

pub(crate) fn labels_of(t: &FeatureTable) -> Result<&[u8]> {
    let labels = t
        .labels
        .as_deref()
        .ok_or_else(|| invalid("labels", "training requires a labeled table"))?;
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::SingleClass);
    }
    t.check_finite()?;
    Ok(labels)
}

pub fn train_gbt_traced(t: &FeatureTable, cfg: &GbtConfig) -> Result<(Ensemble, TrainingTrace)> {
    cfg.validate()?;
    let labels = labels_of(t)?;
    let n = t.n_rows();
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let prior = y.iter().sum::<f64>() / n as f64;
    let base_score = logit(prior);

    let cols: Vec<Vec<f64>> = (0..t.n_features()).map(|j| t.column(j).collect()).collect();
    let sorted: Vec<Vec<usize>> = cols
        .iter()
        .map(|c| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
            idx
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut margin = vec![base_score; n];
    let mut losses = vec![mean_log_loss(&y, &margin)];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for _ in 0..cfg.n_trees {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = p - y[i];
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let include: Option<Vec<bool>> = (cfg.subsample < 1.0).then(|| {
            let k = ((n as f64 * cfg.subsample).ceil() as usize).clamp(1, n);
            let mut mask = vec![false; n];
            for i in sample(&mut rng, n, k) {
                mask[i] = true;
            }
            mask
        });
        let tree = TreeBuilder {
            cfg,
            cols: &cols,
            sorted: &sorted,
            grad: &grad,
            hess: &hess,
        }
        .build(include.as_deref());
        for (i, m) in margin.iter_mut().enumerate() {
            let row: Vec<f64> = cols.iter().map(|c| c[i]).collect();
            *m += cfg.learning_rate * tree.leaf_value(&row);
        }
        losses.push(mean_log_loss(&y, &margin));
        trees.push(tree);
    }

    Ok((
        Ensemble {
            feature_names: t.feature_names.clone(),
            base_score,
            learning_rate: cfg.learning_rate,
            trees,
        },
        TrainingTrace { losses },
    ))
}

fn mean_log_loss(y: &[f64], margin: &[f64]) -> f64 {
    y.iter().zip(margin).map(|(&yi, &m)| log_loss(yi, m)).sum::<f64>() / y.len() as f64
}

/// The regularized objective reduction of splitting `(g, h)` into left/right.
pub fn split_gain(g_left: f64, h_left: f64, g_total: f64, h_total: f64, lambda: f64) -> f64 {
    let g_right = g_total - g_left;
    let h_right = h_total - h_left;
    0.5 * (g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda)
        - g_total * g_total / (h_total + lambda))
}

/// Candidate threshold between two consecutive distinct values `lo < hi`.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct TreeBuilder<'a> {
    cfg: &'a GbtConfig,
    cols: &'a [Vec<f64>],
    sorted: &'a [Vec<usize>],
    grad: &'a [f64],
    hess: &'a [f64],
}

const NONE: usize = usize::MAX;

/// Gains within this relative distance count as tied, so the earlier
/// candidate wins regardless of floating-point summation order.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-12;

impl TreeBuilder<'_> {
    fn weight(&self, g: f64, h: f64) -> f64 {
        (-g / (h + self.cfg.lambda)).clamp(-self.cfg.leaf_clamp, self.cfg.leaf_clamp)
    }

    /// Level-wise growth: one scan per feature per level evaluates every
    /// open node at once, using the global presorted orders.
    fn build(&self, include: Option<&[bool]>) -> Tree {
        let n = self.grad.len();
        let mut node_of: Vec<usize> = (0..n)
            .map(|i| if include.is_none_or(|m| m[i]) { 0 } else { NONE })
            .collect();
        let (g0, h0) = node_of
            .iter()
            .enumerate()
            .filter(|&(_, &nd)| nd == 0)
            .fold((0.0, 0.0), |(g, h), (i, _)| (g + self.grad[i], h + self.hess[i]));

        let mut stats: Vec<(f64, f64)> = vec![(g0, h0)];
        let mut nodes = vec![Node::Leaf {
            value: self.weight(g0, h0),
            cover: h0,
        }];
        let mut frontier = vec![0usize];

        for _ in 0..self.cfg.max_depth {
            if frontier.is_empty() {
                break;
            }
            let mut slot_of = vec![NONE; nodes.len()];
            for (s, &nd) in frontier.iter().enumerate() {
                slot_of[nd] = s;
            }
            let best = self.best_splits(&frontier, &slot_of, &stats, &node_of);

            let mut next = Vec::new();
            for (s, &nd) in frontier.iter().enumerate() {
                let Some(c) = best[s] else { continue };
                let (left, right) = (nodes.len(), nodes.len() + 1);
                let (mut gl, mut hl) = (0.0, 0.0);
                for (i, slot) in node_of.iter_mut().enumerate() {
                    if *slot == nd {
                        if self.cols[c.feature][i] < c.threshold {
                            *slot = left;
                            gl += self.grad[i];
                            hl += self.hess[i];
                        } else {
                            *slot = right;
                        }
                    }
                }
                let (g, h) = stats[nd];
                let (gr, hr) = (g - gl, h - hl);
                nodes[nd] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right,
                    value: nodes[nd].value(),
                    cover: h,
                };
                nodes.push(Node::Leaf {
                    value: self.weight(gl, hl),
                    cover: hl,
                });
                nodes.push(Node::Leaf {
                    value: self.weight(gr, hr),
                    cover: hr,
                });
                stats.push((gl, hl));
                stats.push((gr, hr));
                next.push(left);
                next.push(right);
            }
            frontier = next;
        }
        Tree { nodes }
    }

    fn best_splits(
        &self,
        frontier: &[usize],
        slot_of: &[usize],
        stats: &[(f64, f64)],
        node_of: &[usize],
    ) -> Vec<Option<Candidate>> {
        let k = frontier.len();
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        let floor = self.cfg.min_split_gain.max(0.0);
        let mcw = self.cfg.min_child_weight;
        let lambda = self.cfg.lambda;

        for (f, order) in self.sorted.iter().enumerate() {
            let col = &self.cols[f];
            let mut acc = vec![(0.0f64, 0.0f64); k];
            let mut last: Vec<Option<f64>> = vec![None; k];
            for &i in order {
                let nd = node_of[i];
                if nd == NONE || nd >= slot_of.len() {
                    continue;
                }
                let s = slot_of[nd];
                if s == NONE {
                    continue;
                }
                let v = col[i];
                if let Some(prev) = last[s] {
                    if v > prev {
                        let (gl, hl) = acc[s];
                        let (g, h) = stats[nd];
                        if hl >= mcw && h - hl >= mcw {
                            let gain = split_gain(gl, hl, g, h, lambda);
                            let beats = match best[s] {
                                Some(b) => gain > b.gain * (1.0 + GAIN_TIE_TOLERANCE),
                                None => gain > floor,
                            };
                            if beats {
                                best[s] = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold: midpoint(prev, v),
                                });
                            }
                        }
                    }
                }
                acc[s].0 += self.grad[i];
                acc[s].1 += self.hess[i];
                last[s] = Some(v);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::classify;

    pub(crate) fn separable(n: usize) -> FeatureTable {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let k = (i / 2 + 1) as f64 / 10.0;
                vec![if i % 2 == 0 { -k } else { k }]
            })
            .collect();
        let labels = rows.iter().map(|r| (r[0] > 0.0) as u8).collect();
        FeatureTable::new(vec!["x".into()], rows, Some(labels)).unwrap()
    }

    #[test]
    fn stumps_separate_at_sign_boundary() {
        let t = separable(20);
        let cfg = GbtConfig {
            n_trees: 10,
            max_depth: 1,
            ..Default::default()
        };
        let m = train_gbt(&t, &cfg).unwrap();
        match m.trees[0].root() {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.0);
            }
            other => panic!("expected split, got {other:?}"),
        }
        let p = m.predict_proba(&t).unwrap();
        assert_eq!(classify(&p, 0.5).unwrap(), t.labels.clone().unwrap());
    }

    #[test]
    fn empty_ensemble_predicts_prior() {
        let t = separable(20);
        let cfg = GbtConfig {
            n_trees: 0,
            ..Default::default()
        };
        let m = train_gbt(&t, &cfg).unwrap();
        assert!(m.trees.is_empty());
        for p in m.predict_proba(&t).unwrap() {
            assert!((p - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_feature_never_chosen() {
        let t = separable(20);
        let cfg = GbtConfig {
            n_trees: 15,
            max_depth: 2,
            ..Default::default()
        };
        let base = train_gbt(&t, &cfg).unwrap();
        let widened = FeatureTable::new(
            vec!["c".into(), "x".into()],
            t.rows.iter().map(|r| vec![3.0, r[0]]).collect(),
            t.labels.clone(),
        )
        .unwrap();
        let m = train_gbt(&widened, &cfg).unwrap();
        assert_eq!(base.predict_proba(&t).unwrap(), m.predict_proba(&widened).unwrap());
    }

    #[test]
    fn leaf_clamp_bounds_output() {
        let t = separable(20);
        let cfg = GbtConfig {
            n_trees: 1,
            max_depth: 1,
            lambda: 0.0,
            min_child_weight: 0.0,
            learning_rate: 1.0,
            leaf_clamp: 0.5,
            ..Default::default()
        };
        let m = train_gbt(&t, &cfg).unwrap();
        let cap = sigmoid(m.base_score + 0.5);
        for p in m.predict_proba(&t).unwrap() {
            assert!(p <= cap + 1e-15);
        }
    }

    #[test]
    fn rejects_single_class_and_non_finite() {
        let mut t = separable(10);
        t.labels = Some(vec![1; 10]);
        assert!(matches!(train_gbt(&t, &GbtConfig::default()), Err(Error::SingleClass)));
        let mut t = separable(10);
        t.rows[3][0] = f64::INFINITY;
        assert!(matches!(train_gbt(&t, &GbtConfig::default()), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn depth_is_bounded() {
        let t = separable(40);
        let cfg = GbtConfig {
            n_trees: 5,
            max_depth: 3,
            min_child_weight: 0.0,
            ..Default::default()
        };
        for tree in train_gbt(&t, &cfg).unwrap().trees {
            assert!(tree.depth() <= 3);
        }
    }

    #[test]
    fn midpoint_never_collapses_onto_lower_value() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert!(midpoint(a, b) > a);
        assert_eq!(midpoint(0.0, 1.0), 0.5);
    }

    #[test]
    fn subsampling_is_seeded() {
        let t = separable(30);
        let cfg = GbtConfig {
            n_trees: 5,
            subsample: 0.5,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(train_gbt(&t, &cfg).unwrap(), train_gbt(&t, &cfg).unwrap());
    }

    #[test]
    fn loss_trace_is_non_increasing() {
        let t = separable(20);
        let cfg = GbtConfig {
            n_trees: 30,
            max_depth: 2,
            ..Default::default()
        };
        let (_, trace) = train_gbt_traced(&t, &cfg).unwrap();
        assert_eq!(trace.losses.len(), 31);
        assert!(trace.losses.windows(2).all(|w| w[1] <= w[0]));
    }

    /// Brute-force root split: every feature, every midpoint, rows summed afresh.
    fn exhaustive_root(t: &FeatureTable, lambda: f64, mcw: f64) -> Option<(usize, f64)> {
        let y: Vec<f64> = t.labels.as_ref().unwrap().iter().map(|&l| l as f64).collect();
        let p0 = y.iter().sum::<f64>() / y.len() as f64;
        let g: Vec<f64> = y.iter().map(|yi| p0 - yi).collect();
        let h: Vec<f64> = y.iter().map(|_| p0 * (1.0 - p0)).collect();
        let (gt, ht): (f64, f64) = (g.iter().sum(), h.iter().sum());
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..t.n_features() {
            let mut vals: Vec<f64> = t.column(f).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = midpoint(w[0], w[1]);
                let (mut gl, mut hl) = (0.0, 0.0);
                for i in 0..t.n_rows() {
                    if t.rows[i][f] < thr {
                        gl += g[i];
                        hl += h[i];
                    }
                }
                if hl < mcw || ht - hl < mcw {
                    continue;
                }
                let gain = split_gain(gl, hl, gt, ht, lambda);
                if gain > 0.0 && best.is_none_or(|b| gain > b.0 * (1.0 + GAIN_TIE_TOLERANCE)) {
                    best = Some((gain, f, thr));
                }
            }
        }
        best.map(|(_, f, thr)| (f, thr))
    }

    #[test]
    fn first_split_matches_exhaustive_search() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let n = rng.gen_range(4..=50);
            let d = rng.gen_range(1..=4);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| (rng.gen_range(0..12) as f64) / 4.0).collect())
                .collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.4) as u8).collect();
            labels[0] = 0;
            labels[1] = 1;
            let names = (0..d).map(|j| format!("f{j}")).collect();
            let t = FeatureTable::new(names, rows, Some(labels)).unwrap();
            let cfg = GbtConfig {
                n_trees: 1,
                max_depth: 1,
                min_child_weight: 0.5,
                ..Default::default()
            };
            let m = train_gbt(&t, &cfg).unwrap();
            let got = match m.trees[0].root() {
                Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
                Node::Leaf { .. } => None,
            };
            assert_eq!(got, exhaustive_root(&t, cfg.lambda, cfg.min_child_weight), "trial {trial}");
        }
    }
}
