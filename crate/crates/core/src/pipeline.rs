//! End-to-end run: generate, cleanse and split, enrich, correlate, train
//! both models, evaluate, explain and plot. Each stage reads its inputs from
//! and writes its outputs to one directory, so any stage can be rerun alone.
//! `run_all` chains them and finishes with a manifest of content hashes.

use crate::correlate::{correlation_matrix, dynamic_correlation, series_to_long_csv, WindowSpan};
use crate::domain::{
    cleanse, parse_transactions, split_boundaries, write_transactions, CleansePolicy, FeatureTable,
    SplitBoundaries, SplitPart,
};
use crate::emit::{flagged_frequency_series, heatmap_spec, render_sequence, tis_histogram};
use crate::enrich::{enrich, parse_enriched, write_enriched, EnrichConfig, EnrichedTransaction, DAY, TEMPORAL_ATTRIBUTES};
use crate::error::{invalid, Error, Result};
use crate::eval::{compare, evaluate, EvaluationReport};
use crate::explain::{aggregate_tis, explanation_sequence, Attributable, ExplanationSequence, TisReport};
use crate::model::{
    feature_table, train_gbt_traced, train_logistic, undersample, Classifier, Ensemble, FeatureSet, GbtConfig,
    LogisticConfig, Model,
};
use crate::domain::{apply_scaler, fit_scaler, ScalerParams};
use crate::simgen::{describe, generate, ScenarioConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSettings {
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            train_frac: 0.6,
            val_frac: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationSettings {
    pub attributes: Vec<String>,
    pub window_seconds: i64,
    pub stride_seconds: i64,
    /// Attribute pairs tracked window by window.
    pub pairs: Vec<(String, String)>,
}

impl Default for CorrelationSettings {
    fn default() -> Self {
        let mut attributes = vec!["amount".to_string()];
        attributes.extend(TEMPORAL_ATTRIBUTES.iter().map(|s| s.to_string()));
        CorrelationSettings {
            attributes,
            window_seconds: DAY,
            stride_seconds: DAY,
            pairs: vec![
                ("user_tx_count_24h".into(), "amount_over_user_mean_30d".into()),
                ("seconds_since_last_user_tx".into(), "user_tx_count_48h".into()),
                ("hour_of_day".into(), "terminal_tx_count_48h".into()),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotSettings {
    pub flag_window_seconds: i64,
    pub tis_bins: usize,
}

impl Default for PlotSettings {
    fn default() -> Self {
        PlotSettings {
            flag_window_seconds: DAY,
            tis_bins: 10,
        }
    }
}

/// The whole run in one document. `seed` is the only source of randomness:
/// the generator, the under-sampler and the tree learner each receive a seed
/// derived from it, and `generator.seed` is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Existing transaction CSV to use instead of generating one.
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub generator: ScenarioConfig,
    pub cleanse: CleansePolicy,
    pub split: SplitSettings,
    pub enrich: EnrichConfig,
    pub correlation: CorrelationSettings,
    pub undersample_ratio: f64,
    pub gbt: GbtConfig,
    pub logistic: LogisticConfig,
    pub threshold: f64,
    pub temporal_features: Vec<String>,
    /// Number of flagged test rows that get an explanation sequence.
    pub explain_top_k: usize,
    pub plot: PlotSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            out_dir: PathBuf::from("out"),
            seed: 42,
            generator: ScenarioConfig::default(),
            cleanse: CleansePolicy::default(),
            split: SplitSettings::default(),
            enrich: EnrichConfig::default(),
            correlation: CorrelationSettings::default(),
            undersample_ratio: 10.0,
            gbt: GbtConfig::default(),
            logistic: LogisticConfig::default(),
            threshold: 0.5,
            temporal_features: TEMPORAL_ATTRIBUTES.iter().map(|s| s.to_string()).collect(),
            explain_top_k: 5,
            plot: PlotSettings::default(),
        }
    }
}

/// Seed for one stage: the first eight bytes of SHA-256(root seed, stage name).
pub fn derive_seed(root: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.split;
        if !(s.train_frac > 0.0 && s.val_frac > 0.0 && s.train_frac + s.val_frac < 1.0) {
            return Err(invalid("split", "need train_frac > 0, val_frac > 0 and their sum below 1"));
        }
        if !(self.undersample_ratio >= 1.0 && self.undersample_ratio.is_finite()) {
            return Err(invalid("undersample_ratio", "must be a finite value >= 1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(invalid("threshold", "must be in (0, 1)"));
        }
        let c = &self.correlation;
        if c.stride_seconds <= 0 || c.window_seconds < c.stride_seconds {
            return Err(invalid(
                "correlation",
                "stride_seconds must be positive and no larger than window_seconds",
            ));
        }
        if self.plot.flag_window_seconds <= 0 {
            return Err(invalid("plot.flag_window_seconds", "must be positive"));
        }
        if self.plot.tis_bins == 0 {
            return Err(invalid("plot.tis_bins", "must be at least 1"));
        }
        if !(self.cleanse.iqr_k > 0.0) {
            return Err(invalid("cleanse.iqr_k", "must be positive"));
        }
        let known = FeatureSet::Enriched.names();
        if let Some(bad) = self.temporal_features.iter().find(|f| !known.contains(f)) {
            return Err(invalid("temporal_features", format!("unknown feature `{bad}`")));
        }
        if self.input.is_none() {
            self.generator.validate().map_err(|e| match e {
                Error::InvalidParameter { name, message } => invalid(&format!("generator.{name}"), message),
                e => e,
            })?;
        }
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Generate,
    Preprocess,
    Enrich,
    Correlate,
    Train,
    Evaluate,
    Explain,
    Plot,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Generate,
        Stage::Preprocess,
        Stage::Enrich,
        Stage::Correlate,
        Stage::Train,
        Stage::Evaluate,
        Stage::Explain,
        Stage::Plot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Preprocess => "preprocess",
            Stage::Enrich => "enrich",
            Stage::Correlate => "correlate",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Explain => "explain",
            Stage::Plot => "plot",
        }
    }

    /// Run this stage alone, reading the previous stages' files.
    pub fn run(self, cfg: &RunConfig) -> Result<Vec<String>> {
        let out = match self {
            Stage::Generate => stage_generate(cfg),
            Stage::Preprocess => stage_preprocess(cfg),
            Stage::Enrich => stage_enrich(cfg),
            Stage::Correlate => stage_correlate(cfg),
            Stage::Train => stage_train(cfg),
            Stage::Evaluate => stage_evaluate(cfg),
            Stage::Explain => stage_explain(cfg),
            Stage::Plot => stage_plot(cfg),
        };
        out.map_err(|e| e.in_stage(self.as_str()))
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl<'a> Writer<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|source| Error::File {
            path: cfg.out_dir.clone(),
            source,
        })?;
        Ok(Writer {
            dir: &cfg.out_dir,
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| Error::File { path, source })?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn done(self) -> Vec<String> {
        self.written
    }
}

fn stage_generate(cfg: &RunConfig) -> Result<Vec<String>> {
    let gen = ScenarioConfig {
        seed: derive_seed(cfg.seed, "generate"),
        ..cfg.generator.clone()
    };
    let d = generate(&gen)?;
    let mut w = Writer::new(cfg)?;
    w.put("dataset.csv", write_transactions(&d)?)?;
    w.put("dataset_summary.json", serde_json::to_string_pretty(&describe(&d))?)?;
    Ok(w.done())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub boundaries: SplitBoundaries,
    pub train_rows: usize,
    pub val_rows: usize,
    pub test_rows: usize,
}

fn stage_preprocess(cfg: &RunConfig) -> Result<Vec<String>> {
    let source = cfg.input.clone().unwrap_or_else(|| cfg.path("dataset.csv"));
    let raw = parse_transactions(&read_text(&source)?)?;
    let (clean, report) = cleanse(&raw, &cfg.cleanse);
    let bounds = split_boundaries(&clean, cfg.split.train_frac, cfg.split.val_frac)?;
    let mut counts = [0usize; 3];
    for t in &clean.transactions {
        counts[bounds.assign(t.timestamp) as usize] += 1;
    }
    let summary = SplitSummary {
        boundaries: bounds,
        train_rows: counts[0],
        val_rows: counts[1],
        test_rows: counts[2],
    };
    let mut w = Writer::new(cfg)?;
    w.put("cleansed.csv", write_transactions(&clean)?)?;
    w.put("cleanse_report.json", serde_json::to_string_pretty(&report)?)?;
    w.put("split.json", serde_json::to_string_pretty(&summary)?)?;
    Ok(w.done())
}

/// Enrichment runs on the whole cleansed history; no attribute looks ahead in
/// time, so a row's values are the same as if later rows did not exist.
fn stage_enrich(cfg: &RunConfig) -> Result<Vec<String>> {
    let clean = parse_transactions(&read_text(&cfg.path("cleansed.csv"))?)?;
    let rows = enrich(&clean, &cfg.enrich)?;
    let mut w = Writer::new(cfg)?;
    w.put("enriched.csv", write_enriched(&rows)?)?;
    Ok(w.done())
}

fn load_enriched(cfg: &RunConfig) -> Result<Vec<EnrichedTransaction>> {
    parse_enriched(&read_text(&cfg.path("enriched.csv"))?)
}

fn load_split(cfg: &RunConfig) -> Result<SplitBoundaries> {
    let s: SplitSummary = serde_json::from_str(&read_text(&cfg.path("split.json"))?)?;
    Ok(s.boundaries)
}

fn stage_correlate(cfg: &RunConfig) -> Result<Vec<String>> {
    let rows = load_enriched(cfg)?;
    let c = &cfg.correlation;
    let matrix = correlation_matrix(&rows, &c.attributes, WindowSpan::labeled("all"))?;
    let series = c
        .pairs
        .iter()
        .map(|(a, b)| dynamic_correlation(&rows, (a, b), c.window_seconds, c.stride_seconds))
        .collect::<Result<Vec<_>>>()?;
    let mut w = Writer::new(cfg)?;
    w.put("correlation_matrix.json", matrix.to_json()?)?;
    w.put("correlation_matrix.csv", matrix.to_long_csv()?)?;
    w.put("dynamic_correlation.csv", series_to_long_csv(&series)?)?;
    Ok(w.done())
}

fn part(rows: &[EnrichedTransaction], b: &SplitBoundaries, p: SplitPart) -> Vec<EnrichedTransaction> {
    rows.iter().filter(|r| b.assign(r.base.timestamp) == p).cloned().collect()
}

/// Train-part table for one feature set, the scaler fitted on it, and the
/// scaled table.
fn fitted(rows: &[EnrichedTransaction], set: FeatureSet) -> Result<(ScalerParams, FeatureTable)> {
    let raw = feature_table(rows, set);
    raw.check_finite()?;
    let scaler = fit_scaler(&raw);
    let scaled = apply_scaler(&scaler, &raw)?;
    Ok((scaler, scaled))
}

fn stage_train(cfg: &RunConfig) -> Result<Vec<String>> {
    let rows = load_enriched(cfg)?;
    let train = part(&rows, &load_split(cfg)?, SplitPart::Train);
    if train.iter().any(|r| r.base.label.is_none()) {
        return Err(invalid("labels", "every training row needs a label"));
    }
    let us_seed = derive_seed(cfg.seed, "undersample");

    let (raw_scaler, raw_table) = fitted(&train, FeatureSet::Raw)?;
    let (raw_sample, _) = undersample(&raw_table, cfg.undersample_ratio, us_seed)?;
    let baseline = train_logistic(&raw_sample, &cfg.logistic)?;

    let (enr_scaler, enr_table) = fitted(&train, FeatureSet::Enriched)?;
    let (enr_sample, _) = undersample(&enr_table, cfg.undersample_ratio, us_seed)?;
    let gbt_cfg = GbtConfig {
        seed: derive_seed(cfg.seed, "gbt"),
        ..cfg.gbt.clone()
    };
    let (timetrail, trace) = train_gbt_traced(&enr_sample, &gbt_cfg)?;

    let mut loss_csv = String::from("round,log_loss\n");
    for (k, l) in trace.losses.iter().enumerate() {
        loss_csv.push_str(&format!("{k},{l}\n"));
    }
    let mut w = Writer::new(cfg)?;
    w.put("scaler_raw.json", serde_json::to_string_pretty(&raw_scaler)?)?;
    w.put("scaler_enriched.json", serde_json::to_string_pretty(&enr_scaler)?)?;
    w.put("model_baseline.json", Model::Logistic(baseline).to_json()?)?;
    w.put("model_timetrail.json", Model::Gbt(timetrail).to_json()?)?;
    w.put("training_loss.csv", loss_csv)?;
    Ok(w.done())
}

/// Everything downstream of training needs: test rows, both models and
/// their scaled test tables.
pub struct Scored {
    pub test: Vec<EnrichedTransaction>,
    pub tx_ids: Vec<String>,
    pub baseline: Model,
    pub timetrail: Ensemble,
    pub raw_table: FeatureTable,
    pub enriched_table: FeatureTable,
}

fn load_model(cfg: &RunConfig, name: &str) -> Result<Model> {
    Model::from_json(&read_text(&cfg.path(name))?)
}

fn load_scaler(cfg: &RunConfig, name: &str) -> Result<ScalerParams> {
    Ok(serde_json::from_str(&read_text(&cfg.path(name))?)?)
}

pub fn load_scored(cfg: &RunConfig) -> Result<Scored> {
    let baseline = load_model(cfg, "model_baseline.json")?;
    let timetrail = match load_model(cfg, "model_timetrail.json")? {
        Model::Gbt(m) => m,
        Model::Logistic(_) => return Err(invalid("model_timetrail.json", "expected a tree ensemble")),
    };
    let rows = load_enriched(cfg)?;
    let test = part(&rows, &load_split(cfg)?, SplitPart::Test);
    let raw_table = apply_scaler(&load_scaler(cfg, "scaler_raw.json")?, &feature_table(&test, FeatureSet::Raw))?;
    let enriched_table = apply_scaler(
        &load_scaler(cfg, "scaler_enriched.json")?,
        &feature_table(&test, FeatureSet::Enriched),
    )?;
    Ok(Scored {
        tx_ids: test.iter().map(|r| r.base.tx_id.clone()).collect(),
        test,
        baseline,
        timetrail,
        raw_table,
        enriched_table,
    })
}

fn report_for<M: Attributable>(
    cfg: &RunConfig,
    name: &str,
    m: &M,
    table: &FeatureTable,
    ids: &[String],
) -> Result<(EvaluationReport, TisReport, Vec<f64>)> {
    let labels = table
        .labels
        .as_deref()
        .ok_or_else(|| invalid("labels", "evaluation needs labeled test rows"))?;
    let probs = m.predict_proba(table)?;
    let tis = aggregate_tis(m, ids, table, &cfg.temporal_features, cfg.threshold)?;
    let report = evaluate(name, ids, labels, &probs, cfg.threshold, Some(tis.aggregate_tis))?;
    Ok((report, tis, probs))
}

fn stage_evaluate(cfg: &RunConfig) -> Result<Vec<String>> {
    let s = load_scored(cfg)?;
    let (base_report, _, base_probs) = report_for(cfg, "baseline", &s.baseline, &s.raw_table, &s.tx_ids)?;
    let (tt_report, tis, tt_probs) = report_for(cfg, "timetrail", &s.timetrail, &s.enriched_table, &s.tx_ids)?;
    let table = compare(&base_report, &tt_report)?;

    let mut preds = csv::Writer::from_writer(Vec::new());
    preds.write_record(["tx_id", "timestamp", "label", "baseline_prob", "timetrail_prob", "flagged"])?;
    for (i, r) in s.test.iter().enumerate() {
        preds.write_record([
            r.base.tx_id.clone(),
            r.base.timestamp.to_string(),
            (r.base.is_fraud() as u8).to_string(),
            base_probs[i].to_string(),
            tt_probs[i].to_string(),
            ((tt_probs[i] >= cfg.threshold) as u8).to_string(),
        ])?;
    }
    let preds = preds.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;

    let mut w = Writer::new(cfg)?;
    w.put("predictions.csv", preds)?;
    w.put("report_baseline.json", base_report.to_json()?)?;
    w.put("report_timetrail.json", tt_report.to_json()?)?;
    w.put("comparison.csv", table.to_csv()?)?;
    w.put("comparison.txt", table.to_text())?;
    w.put("tis_report.json", tis.to_json()?)?;
    Ok(w.done())
}

/// The `k` highest-scoring flagged test rows, ties broken by row order.
pub fn top_flagged(probs: &[f64], threshold: f64, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] >= threshold).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn sequence_name(tx_id: &str, ext: &str) -> String {
    let safe: String = tx_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("sequence_{safe}.{ext}")
}

fn stage_explain(cfg: &RunConfig) -> Result<Vec<String>> {
    let s = load_scored(cfg)?;
    let probs = s.timetrail.predict_proba(&s.enriched_table)?;
    let mut w = Writer::new(cfg)?;
    let mut index = Vec::new();
    for i in top_flagged(&probs, cfg.threshold, cfg.explain_top_k) {
        let seq = explanation_sequence(&s.timetrail, &s.tx_ids[i], &s.enriched_table, i, &cfg.temporal_features)?;
        let name = sequence_name(&seq.tx_id, "json");
        w.put(&name, seq.to_json()?)?;
        index.push(name);
    }
    w.put("explanations.json", serde_json::to_string_pretty(&index)?)?;
    Ok(w.done())
}

fn stage_plot(cfg: &RunConfig) -> Result<Vec<String>> {
    let matrix = crate::correlate::CorrelationMatrix::from_json(&read_text(&cfg.path("correlation_matrix.json"))?)?;
    let spec = heatmap_spec(&matrix);
    let tis: TisReport = serde_json::from_str(&read_text(&cfg.path("tis_report.json"))?)?;
    let index: Vec<String> = serde_json::from_str(&read_text(&cfg.path("explanations.json"))?)?;

    let predictions = read_text(&cfg.path("predictions.csv"))?;
    let mut reader = csv::Reader::from_reader(predictions.as_bytes());
    let (mut ts, mut flagged, mut fraud) = (Vec::new(), Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec?;
        ts.push(rec[1].parse::<i64>().map_err(|e| invalid("predictions.csv", e.to_string()))?);
        fraud.push(&rec[2] == "1");
        flagged.push(&rec[5] == "1");
    }
    let series = flagged_frequency_series(&ts, &flagged, Some(&fraud), cfg.plot.flag_window_seconds)?;
    let hist = tis_histogram(&tis, cfg.plot.tis_bins)?;

    let mut w = Writer::new(cfg)?;
    let label = &matrix.window.label;
    w.put(&format!("heatmap_{label}.csv"), spec.to_csv()?)?;
    w.put(&format!("heatmap_{label}.json"), spec.to_json()?)?;
    w.put(&format!("heatmap_{label}.svg"), spec.to_svg())?;
    w.put("flag_series.csv", series.to_csv()?)?;
    w.put("flag_series.svg", series.to_svg())?;
    w.put("tis_hist.csv", hist.to_csv()?)?;
    w.put("tis_hist.svg", hist.to_svg())?;
    for name in index {
        let seq = ExplanationSequence::from_json(&read_text(&cfg.path(&name))?)?;
        w.put(&name.replace(".json", ".svg"), render_sequence(&seq))?;
    }
    Ok(w.done())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub stage: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Run every stage in order and write `manifest.json`. Generation is
/// skipped when the config names an input file.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<ManifestEntry>> {
    cfg.validate()?;
    let mut manifest = Vec::new();
    for stage in Stage::ALL {
        if stage == Stage::Generate && cfg.input.is_some() {
            continue;
        }
        for name in stage.run(cfg)? {
            let bytes = std::fs::read(cfg.path(&name)).map_err(|source| Error::File {
                path: cfg.path(&name),
                source,
            })?;
            manifest.push(ManifestEntry {
                sha256: sha256_hex(&bytes),
                path: name,
                stage: stage.as_str().to_string(),
            });
        }
    }
    Writer::new(cfg)?.put("manifest.json", serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
