//! Plot data exports and static SVG renderings.
//!
//! Every figure is first a data structure with a CSV or JSON export; the SVG
//! is drawn from that structure. All output is byte-deterministic: numbers
//! in SVG are printed at fixed precision and nothing depends on hash order.

use crate::correlate::CorrelationMatrix;
use crate::error::{invalid, Result};
use crate::explain::{ExplanationSequence, TisReport};
use crate::model::Branch;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn svg_open(width: f64, height: f64) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect x=\"0\" y=\"0\" width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>\n"
    )
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Color anchors of the diverging scale.
pub const COLD: (u8, u8, u8) = (59, 76, 192);
pub const NEUTRAL: (u8, u8, u8) = (247, 247, 247);
pub const HOT: (u8, u8, u8) = (180, 4, 38);
pub const UNDEFINED_FILL: &str = "url(#hatch)";

fn lerp(a: (u8, u8, u8), b: (u8, u8, u8), t: f64) -> (u8, u8, u8) {
    let m = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    (m(a.0, b.0), m(a.1, b.1), m(a.2, b.2))
}

/// Fill for a coefficient: −1 cold, 0 neutral, +1 hot, undefined hatched.
pub fn color_for(v: Option<f64>) -> String {
    let Some(v) = v else {
        return UNDEFINED_FILL.to_string();
    };
    let v = v.clamp(-1.0, 1.0);
    let (r, g, b) = if v < 0.0 { lerp(NEUTRAL, COLD, -v) } else { lerp(NEUTRAL, HOT, v) };
    format!("#{r:02x}{g:02x}{b:02x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSpec {
    pub title: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn heatmap_spec(m: &CorrelationMatrix) -> HeatmapSpec {
    HeatmapSpec {
        title: m.window.label.clone(),
        row_labels: m.attribute_names.clone(),
        col_labels: m.attribute_names.clone(),
        values: m.values.clone(),
    }
}

impl HeatmapSpec {
    /// Wide CSV: `attribute,<col labels...>`, undefined cells left empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["attribute".to_string()];
        header.extend(self.col_labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        csv_string(w)
    }

    pub fn from_csv(title: &str, text: &str) -> Result<HeatmapSpec> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let col_labels: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut row_labels = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            row_labels.push(rec[0].to_string());
            values.push(
                rec.iter()
                    .skip(1)
                    .map(|c| {
                        if c.is_empty() {
                            Ok(None)
                        } else {
                            c.parse::<f64>()
                                .map(Some)
                                .map_err(|e| invalid("heatmap", e.to_string()))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(HeatmapSpec {
            title: title.to_string(),
            row_labels,
            col_labels,
            values,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_svg(&self) -> String {
        const CELL: f64 = 36.0;
        let label_w = 10.0 + 7.0 * self.row_labels.iter().map(|l| l.len()).max().unwrap_or(0) as f64;
        let label_h = 10.0 + 7.0 * self.col_labels.iter().map(|l| l.len()).max().unwrap_or(0) as f64;
        let top = 30.0 + label_h;
        let width = label_w + CELL * self.col_labels.len() as f64 + 20.0;
        let height = top + CELL * self.row_labels.len() as f64 + 20.0;
        let mut s = svg_open(width, height);
        s.push_str(
            "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\">\
<rect width=\"6\" height=\"6\" fill=\"#dddddd\"/><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#888888\" stroke-width=\"2\"/></pattern></defs>\n",
        );
        let _ = writeln!(s, "<text x=\"10\" y=\"18\" font-size=\"13\">{}</text>", esc(&self.title));
        for (j, l) in self.col_labels.iter().enumerate() {
            let x = label_w + CELL * (j as f64 + 0.5);
            let _ = writeln!(
                s,
                "<text x=\"{x:.1}\" y=\"{:.1}\" transform=\"rotate(-60 {x:.1} {:.1})\">{}</text>",
                top - 4.0,
                top - 4.0,
                esc(l)
            );
        }
        for (i, (l, row)) in self.row_labels.iter().zip(&self.values).enumerate() {
            let y = top + CELL * i as f64;
            let _ = writeln!(s, "<text x=\"4\" y=\"{:.1}\">{}</text>", y + CELL * 0.6, esc(l));
            for (j, v) in row.iter().enumerate() {
                let x = label_w + CELL * j as f64;
                let title = v.map(|c| format!("{c:.4}")).unwrap_or_else(|| "undefined".into());
                let _ = writeln!(
                    s,
                    "<rect class=\"cell\" x=\"{x:.1}\" y=\"{y:.1}\" width=\"{CELL:.1}\" height=\"{CELL:.1}\" fill=\"{}\" stroke=\"#ffffff\"><title>{} / {}: {title}</title></rect>",
                    color_for(*v),
                    esc(l),
                    esc(&self.col_labels[j])
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub window_start: i64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesSpec {
    pub name: String,
    pub window_seconds: i64,
    pub points: Vec<SeriesValue>,
    /// Known fraud counts per window, drawn as marks over the main series.
    pub overlay: Option<Vec<SeriesValue>>,
}

/// Flagged-row count per tumbling window `[t_min + k·w, t_min + (k+1)·w)`,
/// with every window up to the last timestamp present, empty or not.
pub fn flagged_frequency_series(
    timestamps: &[i64],
    flagged: &[bool],
    frauds: Option<&[bool]>,
    window_seconds: i64,
) -> Result<TimeSeriesSpec> {
    if window_seconds <= 0 {
        return Err(invalid("window_seconds", "must be positive"));
    }
    if flagged.len() != timestamps.len() || frauds.is_some_and(|f| f.len() != timestamps.len()) {
        return Err(crate::Error::LengthMismatch {
            left: flagged.len(),
            right: timestamps.len(),
        });
    }
    let (Some(&t_min), Some(&t_max)) = (timestamps.iter().min(), timestamps.iter().max()) else {
        return Ok(TimeSeriesSpec {
            name: "flagged".into(),
            window_seconds,
            points: Vec::new(),
            overlay: frauds.map(|_| Vec::new()),
        });
    };
    let n = ((t_max - t_min) / window_seconds + 1) as usize;
    let mut counts = vec![0.0; n];
    let mut fraud_counts = vec![0.0; n];
    for (i, &t) in timestamps.iter().enumerate() {
        let k = ((t - t_min) / window_seconds) as usize;
        if flagged[i] {
            counts[k] += 1.0;
        }
        if frauds.is_some_and(|f| f[i]) {
            fraud_counts[k] += 1.0;
        }
    }
    let to_points = |v: Vec<f64>| {
        v.into_iter()
            .enumerate()
            .map(|(k, value)| SeriesValue {
                window_start: t_min + k as i64 * window_seconds,
                value,
            })
            .collect::<Vec<_>>()
    };
    Ok(TimeSeriesSpec {
        name: "flagged".into(),
        window_seconds,
        points: to_points(counts),
        overlay: frauds.map(|_| to_points(fraud_counts)),
    })
}

impl TimeSeriesSpec {
    /// `window_start,<name>[,fraud]`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["window_start".to_string(), self.name.clone()];
        if self.overlay.is_some() {
            header.push("fraud".into());
        }
        w.write_record(&header)?;
        for (k, p) in self.points.iter().enumerate() {
            let mut rec = vec![p.window_start.to_string(), p.value.to_string()];
            if let Some(o) = &self.overlay {
                rec.push(o[k].value.to_string());
            }
            w.write_record(&rec)?;
        }
        csv_string(w)
    }

    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (760.0, 300.0, 40.0);
        let mut s = svg_open(w, h);
        let _ = writeln!(
            s,
            "<text x=\"{pad}\" y=\"20\" font-size=\"13\">{} per {}s window</text>",
            esc(&self.name),
            self.window_seconds
        );
        let max = self
            .points
            .iter()
            .chain(self.overlay.iter().flatten())
            .map(|p| p.value)
            .fold(1.0f64, f64::max);
        let n = self.points.len().max(2) as f64 - 1.0;
        let x = |k: usize| pad + (w - 2.0 * pad) * k as f64 / n;
        let y = |v: f64| h - pad - (h - 2.0 * pad) * v / max;
        let _ = writeln!(
            s,
            "<line x1=\"{pad}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#444444\"/>",
            h - pad,
            w - pad,
            h - pad
        );
        let _ = writeln!(s, "<text x=\"4\" y=\"{:.1}\">{max}</text>", y(max) + 4.0);
        let pts: Vec<String> = self
            .points
            .iter()
            .enumerate()
            .map(|(k, p)| format!("{:.1},{:.1}", x(k), y(p.value)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline class=\"series\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        if let Some(o) = &self.overlay {
            for (k, p) in o.iter().enumerate().filter(|(_, p)| p.value > 0.0) {
                let _ = writeln!(
                    s,
                    "<circle class=\"fraud\" cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"#d62728\"/>",
                    x(k),
                    y(p.value)
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Nodes of a rendered sequence: the bias first, then one per step.
pub fn render_sequence(seq: &ExplanationSequence) -> String {
    const ROW: f64 = 26.0;
    let n = seq.steps.len() + 1;
    let (w, h) = (720.0, 60.0 + ROW * n as f64 + 30.0);
    let mut s = svg_open(w, h);
    let _ = writeln!(
        s,
        "<text x=\"10\" y=\"20\" font-size=\"13\">{} | p = {:.4} | TIS = {:.3}</text>",
        esc(&seq.tx_id),
        seq.probability,
        seq.tis
    );
    let mut running = seq.bias;
    let node = |s: &mut String, i: usize, label: String, delta: Option<f64>, running: f64| {
        let y = 40.0 + ROW * i as f64;
        let fill = match delta {
            None => "#e8e8e8",
            Some(d) if d >= 0.0 => "#f4c7c3",
            Some(_) => "#c6dbef",
        };
        let _ = writeln!(
            s,
            "<g class=\"node\"><rect x=\"10\" y=\"{y:.1}\" width=\"700\" height=\"{:.1}\" rx=\"4\" fill=\"{fill}\"/><text x=\"18\" y=\"{:.1}\">{}</text><text x=\"600\" y=\"{:.1}\">{running:+.4}</text></g>",
            ROW - 4.0,
            y + 15.0,
            esc(&label),
            y + 15.0
        );
    };
    node(&mut s, 0, format!("bias {:+.4}", seq.bias), None, running);
    for (i, st) in seq.steps.iter().enumerate() {
        running += st.delta;
        let op = match st.branch {
            Branch::Left => "<",
            Branch::Right => ">=",
        };
        node(
            &mut s,
            i + 1,
            format!("tree {} : {} {op} {:.4}  delta {:+.4}", st.tree, st.feature, st.threshold, st.delta),
            Some(st.delta),
            running,
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"10\" y=\"{:.1}\">margin {:+.4}</text>",
        h - 12.0,
        seq.margin
    );
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` uniform edges over `[0, 1]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Uniform bins over `[0, 1]`; the last bin also holds 1.0.
pub fn tis_histogram(r: &TisReport, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(invalid("bins", "must be at least 1"));
    }
    let mut counts = vec![0; bins];
    for e in &r.per_tx {
        let k = ((e.tis * bins as f64).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram {
        edges: (0..=bins).map(|k| k as f64 / bins as f64).collect(),
        counts,
    })
}

impl Histogram {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_start", "bin_end", "count"])?;
        for (k, c) in self.counts.iter().enumerate() {
            w.write_record([self.edges[k].to_string(), self.edges[k + 1].to_string(), c.to_string()])?;
        }
        csv_string(w)
    }

    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (560.0, 300.0, 40.0);
        let mut s = svg_open(w, h);
        s.push_str("<text x=\"40\" y=\"20\" font-size=\"13\">TIS distribution</text>\n");
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let bw = (w - 2.0 * pad) / self.counts.len() as f64;
        for (k, &c) in self.counts.iter().enumerate() {
            let bh = (h - 2.0 * pad) * c as f64 / max;
            let _ = writeln!(
                s,
                "<rect class=\"bar\" x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{bh:.1}\" fill=\"#6a51a3\"><title>[{:.2}, {:.2}{}: {c}</title></rect>",
                pad + bw * k as f64 + 1.0,
                h - pad - bh,
                (bw - 2.0).max(0.5),
                self.edges[k],
                self.edges[k + 1],
                if k + 1 == self.counts.len() { "]" } else { ")" }
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{pad}\" y=\"{:.1}\">0</text><text x=\"{:.1}\" y=\"{:.1}\">1</text>",
            h - pad + 16.0,
            w - pad - 6.0,
            h - pad + 16.0
        );
        s.push_str("</svg>\n");
        s
    }
}
