//! Dynamic correlation analysis: Pearson coefficients between attributes,
//! computed per time window, and the per-window correlation matrix.
//!
//! Coefficients use population moments. A window where either series is
//! constant, or that holds fewer than two rows, yields `None` rather than 0.

mod rolling;

pub use rolling::RollingPearson;

use crate::enrich::EnrichedTransaction;
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSeries {
    pub attribute_name: String,
    pub values: Vec<f64>,
}

impl AttributeSeries {
    pub fn new(attribute_name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let attribute_name = attribute_name.into();
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                feature: attribute_name,
                row,
            });
        }
        Ok(AttributeSeries {
            attribute_name,
            values,
        })
    }

    /// Extract a named attribute from enriched rows.
    pub fn from_rows(rows: &[EnrichedTransaction], name: &str) -> Result<Self> {
        let values = rows
            .iter()
            .map(|r| r.attribute(name))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| invalid("attribute", format!("unknown attribute `{name}`")))?;
        AttributeSeries::new(name, values)
    }

    pub fn pearson(&self, other: &AttributeSeries) -> Result<Option<f64>> {
        pearson(&self.values, &other.values)
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Two-pass Pearson coefficient `Cov(X, Y) / (σ_X σ_Y)`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 || is_constant(x) || is_constant(y) {
        return Ok(None);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let denom = (sxx * syy).sqrt();
    if denom == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / denom).clamp(-1.0, 1.0)))
}

/// Time extent a matrix describes. `start`/`end` are absent for matrices
/// built over an arbitrary row set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpan {
    pub label: String,
    pub start: Option<i64>,
    pub end: Option<i64>,
}

impl WindowSpan {
    pub fn labeled(label: impl Into<String>) -> Self {
        WindowSpan {
            label: label.into(),
            start: None,
            end: None,
        }
    }

    pub fn range(start: i64, end: i64) -> Self {
        WindowSpan {
            label: start.to_string(),
            start: Some(start),
            end: Some(end),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    #[serde(rename = "attributes")]
    pub attribute_names: Vec<String>,
    pub window: WindowSpan,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.attribute_names.iter().position(|n| n == a)?;
        let j = self.attribute_names.iter().position(|n| n == b)?;
        self.values[i][j]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Long form `attr_a,attr_b,window_start,coefficient`, every cell,
    /// undefined cells as an empty coefficient.
    pub fn to_long_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["attr_a", "attr_b", "window_start", "coefficient"])?;
        self.write_long_rows(&mut w)?;
        finish_csv(w)
    }

    fn write_long_rows(&self, w: &mut csv::Writer<Vec<u8>>) -> Result<()> {
        let start = self.window.start.map(|s| s.to_string()).unwrap_or_else(|| self.window.label.clone());
        for (i, a) in self.attribute_names.iter().enumerate() {
            for (j, b) in self.attribute_names.iter().enumerate() {
                w.write_record([a.as_str(), b.as_str(), &start, &fmt_coef(self.values[i][j])])?;
            }
        }
        Ok(())
    }
}

pub(crate) fn fmt_coef(c: Option<f64>) -> String {
    c.map(|v| v.to_string()).unwrap_or_default()
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn columns(rows: &[EnrichedTransaction], attributes: &[String]) -> Result<Vec<AttributeSeries>> {
    attributes.iter().map(|a| AttributeSeries::from_rows(rows, a)).collect()
}

/// Matrix from already-extracted columns of equal length.
pub fn matrix_from_series(series: &[AttributeSeries], window: WindowSpan) -> Result<CorrelationMatrix> {
    let k = series.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        let defined = series[i].values.len() >= 2 && !is_constant(&series[i].values);
        values[i][i] = defined.then_some(1.0);
        for j in (i + 1)..k {
            let c = series[i].pearson(&series[j])?;
            values[i][j] = c;
            values[j][i] = c;
        }
    }
    Ok(CorrelationMatrix {
        attribute_names: series.iter().map(|s| s.attribute_name.clone()).collect(),
        window,
        values,
    })
}

/// Pairwise Pearson over all attribute pairs for one set of rows.
pub fn correlation_matrix(
    rows: &[EnrichedTransaction],
    attributes: &[String],
    window: WindowSpan,
) -> Result<CorrelationMatrix> {
    matrix_from_series(&columns(rows, attributes)?, window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub window_start: i64,
    pub coefficient: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicCorrelationSeries {
    pub pair: (String, String),
    pub points: Vec<SeriesPoint>,
}

/// Sliding windows `[s, s + window)` with `s = t_min + k·stride`, one per
/// start up to the last row's timestamp.
fn window_starts(rows: &[EnrichedTransaction], window_seconds: i64, stride_seconds: i64) -> Result<Vec<i64>> {
    if stride_seconds <= 0 {
        return Err(invalid("stride_seconds", "must be positive"));
    }
    if window_seconds < stride_seconds {
        return Err(invalid("window_seconds", "must be at least stride_seconds"));
    }
    if rows.windows(2).any(|w| w[1].base.timestamp < w[0].base.timestamp) {
        return Err(Error::Unsorted { index: 0 });
    }
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
        return Ok(Vec::new());
    };
    let (t_min, t_max) = (first.base.timestamp, last.base.timestamp);
    Ok((0..)
        .map(|k| t_min + k * stride_seconds)
        .take_while(|&s| s <= t_max)
        .collect())
}

fn slice_of(rows: &[EnrichedTransaction], start: i64, end: i64) -> &[EnrichedTransaction] {
    let lo = rows.partition_point(|r| r.base.timestamp < start);
    let hi = rows.partition_point(|r| r.base.timestamp < end);
    &rows[lo..hi]
}

/// Per-window two-pass Pearson between one attribute pair.
pub fn dynamic_correlation(
    rows: &[EnrichedTransaction],
    pair: (&str, &str),
    window_seconds: i64,
    stride_seconds: i64,
) -> Result<DynamicCorrelationSeries> {
    let x = AttributeSeries::from_rows(rows, pair.0)?;
    let y = AttributeSeries::from_rows(rows, pair.1)?;
    let points = window_starts(rows, window_seconds, stride_seconds)?
        .into_iter()
        .map(|s| {
            let lo = rows.partition_point(|r| r.base.timestamp < s);
            let hi = rows.partition_point(|r| r.base.timestamp < s + window_seconds);
            Ok(SeriesPoint {
                window_start: s,
                coefficient: pearson(&x.values[lo..hi], &y.values[lo..hi])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DynamicCorrelationSeries {
        pair: (pair.0.to_string(), pair.1.to_string()),
        points,
    })
}

/// Same windows as [`dynamic_correlation`], evaluated in one pass with
/// [`RollingPearson`] instead of recomputing each window.
pub fn streaming_dynamic_correlation(
    rows: &[EnrichedTransaction],
    pair: (&str, &str),
    window_seconds: i64,
    stride_seconds: i64,
) -> Result<DynamicCorrelationSeries> {
    let x = AttributeSeries::from_rows(rows, pair.0)?;
    let y = AttributeSeries::from_rows(rows, pair.1)?;
    let mut acc = RollingPearson::new();
    let (mut lo, mut hi) = (0, 0);
    let points = window_starts(rows, window_seconds, stride_seconds)?
        .into_iter()
        .map(|s| {
            while hi < rows.len() && rows[hi].base.timestamp < s + window_seconds {
                acc.push(x.values[hi], y.values[hi]);
                hi += 1;
            }
            while lo < hi && rows[lo].base.timestamp < s {
                acc.pop();
                lo += 1;
            }
            SeriesPoint {
                window_start: s,
                coefficient: acc.coefficient(),
            }
        })
        .collect();
    Ok(DynamicCorrelationSeries {
        pair: (pair.0.to_string(), pair.1.to_string()),
        points,
    })
}

/// One matrix per sliding window.
pub fn windowed_matrices(
    rows: &[EnrichedTransaction],
    attributes: &[String],
    window_seconds: i64,
    stride_seconds: i64,
) -> Result<Vec<CorrelationMatrix>> {
    window_starts(rows, window_seconds, stride_seconds)?
        .into_iter()
        .map(|s| {
            correlation_matrix(
                slice_of(rows, s, s + window_seconds),
                attributes,
                WindowSpan::range(s, s + window_seconds),
            )
        })
        .collect()
}

/// Per-window means of each attribute over tumbling windows; empty windows
/// are skipped. The alternative basis to row-level correlation.
pub fn window_means(rows: &[EnrichedTransaction], attributes: &[String], window_seconds: i64) -> Result<Vec<AttributeSeries>> {
    let starts = window_starts(rows, window_seconds, window_seconds)?;
    let cols = columns(rows, attributes)?;
    let mut means = vec![Vec::new(); attributes.len()];
    for s in starts {
        let lo = rows.partition_point(|r| r.base.timestamp < s);
        let hi = rows.partition_point(|r| r.base.timestamp < s + window_seconds);
        if hi == lo {
            continue;
        }
        for (m, c) in means.iter_mut().zip(&cols) {
            m.push(c.values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64);
        }
    }
    attributes
        .iter()
        .zip(means)
        .map(|(a, v)| AttributeSeries::new(a.clone(), v))
        .collect()
}

/// Correlation matrix between window-aggregate series.
pub fn aggregate_correlation_matrix(
    rows: &[EnrichedTransaction],
    attributes: &[String],
    window_seconds: i64,
) -> Result<CorrelationMatrix> {
    let series = window_means(rows, attributes, window_seconds)?;
    matrix_from_series(&series, WindowSpan::labeled(format!("means_{window_seconds}s")))
}

/// Long-form CSV over many series: `attr_a,attr_b,window_start,coefficient`.
pub fn series_to_long_csv(series: &[DynamicCorrelationSeries]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["attr_a", "attr_b", "window_start", "coefficient"])?;
    for s in series {
        for p in &s.points {
            w.write_record([
                s.pair.0.as_str(),
                s.pair.1.as_str(),
                &p.window_start.to_string(),
                &fmt_coef(p.coefficient),
            ])?;
        }
    }
    finish_csv(w)
}

/// Long-form CSV over a sequence of matrices.
pub fn matrices_to_long_csv(matrices: &[CorrelationMatrix]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["attr_a", "attr_b", "window_start", "coefficient"])?;
    for m in matrices {
        m.write_long_rows(&mut w)?;
    }
    finish_csv(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{tx, Dataset};
    use crate::enrich::{enrich, EnrichConfig, DAY, TEMPORAL_ATTRIBUTES};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Definitional population formula, kept separate from `pearson`.
    fn oracle(x: &[f64], y: &[f64]) -> Option<f64> {
        let n = x.len() as f64;
        if x.len() < 2 {
            return None;
        }
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
        let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n).sqrt();
        if x.iter().all(|&a| a == x[0]) || y.iter().all(|&b| b == y[0]) {
            return None;
        }
        Some(cov / (sx * sy))
    }

    fn enriched_fixture(seed: u64, n: usize, span: i64) -> Vec<EnrichedTransaction> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|i| {
                tx(
                    &format!("t{i:05}"),
                    1_000 + rng.gen_range(0..span),
                    &format!("u{}", rng.gen_range(0..12)),
                    rng.gen_range(100..90_000) as f64 / 100.0,
                )
            })
            .collect();
        enrich(&Dataset::new(rows), &EnrichConfig::default()).unwrap()
    }

    #[test]
    fn scalar_cases() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), Some(1.0));
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), Some(-1.0));
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap().unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(pearson(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]).unwrap(), None);
        assert_eq!(pearson(&[1.0], &[2.0]).unwrap(), None);
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn non_finite_series_rejected() {
        assert!(AttributeSeries::new("x", vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn constant_windows_all_undefined() {
        let mut constant = enriched_fixture(1, 100, 10 * DAY);
        for r in &mut constant {
            r.base.amount = 5.0;
        }
        let s = dynamic_correlation(&constant, ("amount", "hour_of_day"), DAY, DAY).unwrap();
        assert!(!s.points.is_empty());
        assert!(s.points.iter().all(|p| p.coefficient.is_none()));
    }

    #[test]
    fn single_full_window_equals_global() {
        let rows = enriched_fixture(2, 300, 20 * DAY);
        let span = rows.last().unwrap().base.timestamp - rows[0].base.timestamp + 1;
        let s = dynamic_correlation(&rows, ("amount", "hour_of_day"), span, span).unwrap();
        assert_eq!(s.points.len(), 1);
        let x: Vec<f64> = rows.iter().map(|r| r.base.amount).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.attrs.hour_of_day as f64).collect();
        assert_eq!(s.points[0].coefficient, pearson(&x, &y).unwrap());
    }

    #[test]
    fn per_window_oracle() {
        let rows = enriched_fixture(3, 500, 30 * DAY);
        let pair = ("amount", "user_tx_count_7d");
        let s = dynamic_correlation(&rows, pair, DAY, DAY).unwrap();
        for p in &s.points {
            let w: Vec<_> = rows
                .iter()
                .filter(|r| r.base.timestamp >= p.window_start && r.base.timestamp < p.window_start + DAY)
                .collect();
            let x: Vec<f64> = w.iter().map(|r| r.base.amount).collect();
            let y: Vec<f64> = w.iter().map(|r| r.attrs.user_tx_count_7d as f64).collect();
            match (p.coefficient, oracle(&x, &y)) {
                (None, None) => {}
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
                other => panic!("definedness differs: {other:?}"),
            }
        }
    }

    #[test]
    fn streaming_matches_recomputation_with_overlap() {
        let rows = enriched_fixture(4, 800, 40 * DAY);
        for (w, s) in [(DAY, DAY), (3 * DAY, DAY), (2 * DAY, 7_200)] {
            let a = dynamic_correlation(&rows, ("amount", "seconds_since_last_user_tx"), w, s).unwrap();
            let b = streaming_dynamic_correlation(&rows, ("amount", "seconds_since_last_user_tx"), w, s).unwrap();
            assert_eq!(a.points.len(), b.points.len());
            for (p, q) in a.points.iter().zip(&b.points) {
                match (p.coefficient, q.coefficient) {
                    (None, None) => {}
                    (Some(u), Some(v)) => assert!((u - v).abs() < 1e-9),
                    other => panic!("definedness differs: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn bad_window_parameters() {
        let rows = enriched_fixture(5, 10, DAY);
        assert!(dynamic_correlation(&rows, ("amount", "is_night"), 10, 20).is_err());
        assert!(dynamic_correlation(&rows, ("amount", "is_night"), 10, 0).is_err());
        assert!(dynamic_correlation(&rows, ("amount", "bogus"), 10, 10).is_err());
        assert!(dynamic_correlation(&[], ("amount", "is_night"), 10, 10).unwrap().points.is_empty());
    }

    #[test]
    fn matrix_shape_and_elementwise_oracle() {
        let rows = enriched_fixture(6, 100, 10 * DAY);
        let attrs: Vec<String> = ["amount", "hour_of_day", "user_tx_count_7d"].map(String::from).to_vec();
        let m = correlation_matrix(&rows, &attrs, WindowSpan::labeled("all")).unwrap();
        assert_eq!(m.values.len(), 3);
        for i in 0..3 {
            assert_eq!(m.values[i].len(), 3);
            let xi = AttributeSeries::from_rows(&rows, &attrs[i]).unwrap();
            for (j, aj) in attrs.iter().enumerate() {
                assert_eq!(m.values[i][j], m.values[j][i]);
                let xj = AttributeSeries::from_rows(&rows, aj).unwrap();
                let expect = if i == j { Some(1.0) } else { pearson(&xi.values, &xj.values).unwrap() };
                assert_eq!(m.values[i][j], expect);
            }
        }
    }

    #[test]
    fn identical_columns_and_constant_diagonal() {
        let mut rows = enriched_fixture(7, 50, 3 * DAY);
        for r in &mut rows {
            r.attrs.is_night = 1;
        }
        let attrs: Vec<String> = ["amount", "amount", "is_night"].map(String::from).to_vec();
        let m = correlation_matrix(&rows, &attrs, WindowSpan::labeled("x")).unwrap();
        assert_eq!(m.values[0][1], Some(1.0));
        assert_eq!(m.values[2][2], None);
        assert_eq!(m.values[0][2], None);
    }

    #[test]
    fn matrix_json_uses_null_and_round_trips() {
        let rows = enriched_fixture(8, 40, 3 * DAY);
        let attrs: Vec<String> = TEMPORAL_ATTRIBUTES.map(String::from).to_vec();
        let mut m = correlation_matrix(&rows, &attrs, WindowSpan::range(0, DAY)).unwrap();
        m.values[0][1] = None;
        let json = m.to_json().unwrap();
        assert!(json.contains("null"));
        assert!(json.contains("\"attributes\""));
        assert_eq!(CorrelationMatrix::from_json(&json).unwrap(), m);
        let csv = m.to_long_csv().unwrap();
        assert_eq!(csv.lines().count(), 1 + 81);
    }

    #[test]
    fn window_mean_basis() {
        let rows = enriched_fixture(9, 400, 30 * DAY);
        let attrs: Vec<String> = ["amount", "user_tx_count_24h"].map(String::from).to_vec();
        let means = window_means(&rows, &attrs, DAY).unwrap();
        assert_eq!(means[0].values.len(), means[1].values.len());
        assert!(means[0].values.len() <= 31);
        let m = aggregate_correlation_matrix(&rows, &attrs, DAY).unwrap();
        assert_eq!(m.values[0][1], pearson(&means[0].values, &means[1].values).unwrap());
    }

    proptest! {
        #[test]
        fn symmetry_and_affine_covariance(
            x in proptest::collection::vec(-1e3f64..1e3, 3..40),
            seed in 0u64..1000,
            a in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
            b in -100.0f64..100.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = x.iter().map(|_| rng.gen_range(-1e3..1e3)).collect();
            prop_assert_eq!(pearson(&x, &y).unwrap(), pearson(&y, &x).unwrap());
            let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            if let (Some(r), Some(s)) = (pearson(&x, &y).unwrap(), pearson(&ax, &y).unwrap()) {
                prop_assert!((s - a.signum() * r).abs() < 1e-9);
            }
        }

        #[test]
        fn coefficient_bounded(x in proptest::collection::vec(-1e6f64..1e6, 2..30), y in proptest::collection::vec(-1e6f64..1e6, 2..30)) {
            let n = x.len().min(y.len());
            if let Some(r) = pearson(&x[..n], &y[..n]).unwrap() {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
