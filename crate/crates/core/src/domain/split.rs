use super::Dataset;
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

/// Inclusive upper timestamps of the train and validation parts. Rows at
/// a boundary timestamp belong to the earlier part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBoundaries {
    pub train_end: i64,
    pub val_end: i64,
}

impl SplitBoundaries {
    pub fn assign(&self, timestamp: i64) -> SplitPart {
        if timestamp <= self.train_end {
            SplitPart::Train
        } else if timestamp <= self.val_end {
            SplitPart::Val
        } else {
            SplitPart::Test
        }
    }
}

fn check_fractions(train_frac: f64, val_frac: f64) -> Result<()> {
    if !(train_frac > 0.0) {
        return Err(invalid("train_frac", "must be positive"));
    }
    if !(val_frac > 0.0) {
        return Err(invalid("val_frac", "must be positive"));
    }
    if !(train_frac + val_frac < 1.0) {
        return Err(invalid("train_frac", "train_frac + val_frac must be below 1"));
    }
    Ok(())
}

/// Cut points at the row-count quantiles `train_frac` and `train_frac + val_frac`.
pub fn split_boundaries(d: &Dataset, train_frac: f64, val_frac: f64) -> Result<SplitBoundaries> {
    check_fractions(train_frac, val_frac)?;
    let n = d.len();
    let ts = |i: usize| d.transactions[i].timestamp;
    let n_train = (n as f64 * train_frac).round() as usize;
    let n_train_val = (n as f64 * (train_frac + val_frac)).round() as usize;
    if n_train == 0 || n_train_val <= n_train || n_train_val >= n {
        return Err(Error::TooSmall(format!(
            "{n} rows cannot fill train/val/test at fractions ({train_frac}, {val_frac})"
        )));
    }
    let bounds = SplitBoundaries {
        train_end: ts(n_train - 1),
        val_end: ts(n_train_val - 1),
    };
    if bounds.val_end <= bounds.train_end || ts(n - 1) <= bounds.val_end {
        return Err(Error::TooSmall(
            "shared timestamps at the cut points leave a part empty".to_string(),
        ));
    }
    Ok(bounds)
}

/// Time-ordered train/validation/test split with no row lost or duplicated.
pub fn temporal_split(d: &Dataset, train_frac: f64, val_frac: f64) -> Result<(Dataset, Dataset, Dataset)> {
    let bounds = split_boundaries(d, train_frac, val_frac)?;
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for t in &d.transactions {
        match bounds.assign(t.timestamp) {
            SplitPart::Train => train.push(t.clone()),
            SplitPart::Val => val.push(t.clone()),
            SplitPart::Test => test.push(t.clone()),
        }
    }
    Ok((Dataset::new(train), Dataset::new(val), Dataset::new(test)))
}
