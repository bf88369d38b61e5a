use super::{Dataset, Transaction};
use crate::error::{invalid, Result};

/// A half-open window `[start, end)` and the rows that fall inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<'a> {
    pub start: i64,
    pub end: i64,
    pub rows: &'a [Transaction],
}

/// Partition a dataset into contiguous windows `[t_min + k·w, t_min + (k+1)·w)`
/// covering `[t_min, t_max]`. Empty windows are kept so the sequence has no gaps.
pub fn temporal_segment(d: &Dataset, window_seconds: i64) -> Result<Vec<Segment<'_>>> {
    if window_seconds <= 0 {
        return Err(invalid("window_seconds", "must be positive"));
    }
    let (Some(t_min), Some(t_max)) = (d.meta.t_min, d.meta.t_max) else {
        return Ok(Vec::new());
    };
    let rows = d.transactions.as_slice();
    let n_windows = (t_max - t_min) / window_seconds + 1;
    let mut out = Vec::with_capacity(n_windows as usize);
    let mut lo = 0;
    for k in 0..n_windows {
        let start = t_min + k * window_seconds;
        let end = start + window_seconds;
        let hi = lo + rows[lo..].partition_point(|t| t.timestamp < end);
        out.push(Segment {
            start,
            end,
            rows: &rows[lo..hi],
        });
        lo = hi;
    }
    Ok(out)
}
