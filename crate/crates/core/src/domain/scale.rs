use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

/// Named numeric feature matrix, optionally labeled (1 = fraud).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<u8>>,
}

impl FeatureTable {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Option<Vec<u8>>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != feature_names.len()) {
            return Err(Error::LengthMismatch {
                left: bad.len(),
                right: feature_names.len(),
            });
        }
        if let Some(l) = &labels {
            if l.len() != rows.len() {
                return Err(Error::LengthMismatch {
                    left: l.len(),
                    right: rows.len(),
                });
            }
            if l.iter().any(|&v| v > 1) {
                return Err(invalid("labels", "labels must be 0 or 1"));
            }
        }
        Ok(FeatureTable {
            feature_names,
            rows,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[j])
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Keep only the listed rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureTable {
        FeatureTable {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Reorder columns to `names`; every name must exist and no column may be left over.
    pub fn aligned_to(&self, names: &[String]) -> Result<FeatureTable> {
        let missing: Vec<String> = names
            .iter()
            .filter(|n| self.feature_index(n).is_none())
            .cloned()
            .collect();
        let extra: Vec<String> = self
            .feature_names
            .iter()
            .filter(|n| !names.contains(n))
            .cloned()
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(Error::SchemaMismatch { missing, extra });
        }
        if self.feature_names == names {
            return Ok(self.clone());
        }
        let order: Vec<usize> = names.iter().map(|n| self.feature_index(n).unwrap()).collect();
        Ok(FeatureTable {
            feature_names: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| order.iter().map(|&j| r[j]).collect())
                .collect(),
            labels: self.labels.clone(),
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    feature: self.feature_names[j].clone(),
                    row: i,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub features: Vec<FeatureRange>,
}

impl ScalerParams {
    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }
}

/// Per-feature min and max over the training rows. An empty table yields
/// `min = max = 0` so every feature scales to the degenerate constant.
pub fn fit_scaler(train: &FeatureTable) -> ScalerParams {
    let features = train
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (min, max) = train
                .column(j)
                .fold(None, |acc: Option<(f64, f64)>, v| match acc {
                    None => Some((v, v)),
                    Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
                })
                .unwrap_or((0.0, 0.0));
            FeatureRange {
                name: name.clone(),
                min,
                max,
            }
        })
        .collect();
    ScalerParams { features }
}

fn scale_one(r: &FeatureRange, x: f64) -> f64 {
    if r.max == r.min {
        0.0
    } else {
        ((x - r.min) / (r.max - r.min)).clamp(0.0, 1.0)
    }
}

/// Min-max scale into `[0, 1]`, clipping values outside the fitted range.
/// Columns are matched by name and the output follows the fitted order.
pub fn apply_scaler(params: &ScalerParams, features: &FeatureTable) -> Result<FeatureTable> {
    let aligned = features.aligned_to(&params.feature_names())?;
    let rows = aligned
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .zip(&params.features)
                .map(|(&x, r)| scale_one(r, x))
                .collect()
        })
        .collect();
    Ok(FeatureTable { rows, ..aligned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column(values: &[f64]) -> FeatureTable {
        FeatureTable::new(vec!["x".into()], values.iter().map(|&v| vec![v]).collect(), None).unwrap()
    }

    fn values(t: &FeatureTable) -> Vec<f64> {
        t.column(0).collect()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let t = column(&[0.0, 5.0, 10.0]);
        let p = fit_scaler(&t);
        assert_eq!(values(&apply_scaler(&p, &t).unwrap()), [0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let t = column(&[7.0, 7.0, 7.0]);
        let p = fit_scaler(&t);
        assert_eq!(values(&apply_scaler(&p, &t).unwrap()), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_range_is_clipped() {
        let p = fit_scaler(&column(&[0.0, 10.0]));
        assert_eq!(values(&apply_scaler(&p, &column(&[12.0, -3.0])).unwrap()), [1.0, 0.0]);
    }

    #[test]
    fn schema_mismatch_names_columns() {
        let p = fit_scaler(&column(&[0.0, 1.0]));
        let other = FeatureTable::new(vec!["y".into()], vec![vec![1.0]], None).unwrap();
        match apply_scaler(&p, &other) {
            Err(Error::SchemaMismatch { missing, extra }) => {
                assert_eq!(missing, ["x"]);
                assert_eq!(extra, ["y"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(FeatureTable::new(vec!["a".into(), "b".into()], vec![vec![1.0]], None).is_err());
        assert!(FeatureTable::new(vec!["a".into()], vec![vec![1.0]], Some(vec![0, 1])).is_err());
    }

    proptest! {
        #[test]
        fn scaled_values_bounded(train in proptest::collection::vec(-1e6f64..1e6, 1..50),
                                 other in proptest::collection::vec(-2e6f64..2e6, 0..50)) {
            let p = fit_scaler(&column(&train));
            let own = apply_scaler(&p, &column(&train)).unwrap();
            let (lo, hi) = (p.features[0].min, p.features[0].max);
            for (x, s) in train.iter().zip(values(&own)) {
                prop_assert!((0.0..=1.0).contains(&s));
                if lo != hi && *x == lo { prop_assert_eq!(s, 0.0); }
                if lo != hi && *x == hi { prop_assert_eq!(s, 1.0); }
            }
            for s in values(&apply_scaler(&p, &column(&other)).unwrap()) {
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }
    }
}
