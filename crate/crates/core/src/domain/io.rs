use super::{Dataset, Label, Transaction, TxType};
use crate::error::{Error, Result};
use chrono::{DateTime, SecondsFormat, Utc};

const REQUIRED: [&str; 6] = ["tx_id", "timestamp", "user_id", "terminal_id", "amount", "tx_type"];

/// Accepts integer epoch seconds or an RFC 3339 / ISO-8601 UTC instant.
pub fn parse_timestamp(raw: &str) -> std::result::Result<i64, String> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Ok(secs);
    }
    DateTime::parse_from_rfc3339(raw)
        .map(|dt| dt.timestamp())
        .map_err(|e| format!("`{raw}` is neither epoch seconds nor ISO-8601: {e}"))
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|dt| dt.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| ts.to_string())
}

/// Parse the transaction CSV format.
///
/// Columns are located by header name. `label` and `scenario` are optional;
/// unknown extra columns are ignored so enriched exports read back as their
/// base transactions.
pub fn parse_transactions(csv_text: &str) -> Result<Dataset> {
    let rows = parse_rows(csv_text, &[])?;
    Ok(Dataset::new(rows.into_iter().map(|(t, _)| t).collect()))
}

/// Rows in file order, each with the values of the requested numeric
/// `extra` columns.
pub(crate) fn parse_rows(csv_text: &str, extra: &[&str]) -> Result<Vec<(Transaction, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        col(name).ok_or_else(|| Error::Parse {
            line: 1,
            field: name.to_string(),
            message: "missing column in header".to_string(),
        })
    };

    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = require(name)?;
    }
    let extra_idx = extra.iter().map(|n| require(n)).collect::<Result<Vec<_>>>()?;
    let label_col = col("label");
    let scenario_col = col("scenario");

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let fail = |name: &str, message: String| Error::Parse {
            line,
            field: name.to_string(),
            message,
        };

        let timestamp = parse_timestamp(field(idx[1])).map_err(|m| fail("timestamp", m))?;
        if timestamp <= 0 {
            return Err(fail("timestamp", format!("must be positive, got {timestamp}")));
        }
        let amount_raw = field(idx[4]);
        let amount: f64 = amount_raw
            .parse()
            .map_err(|_| fail("amount", format!("`{amount_raw}` is not a number")))?;
        if !amount.is_finite() || amount < 0.0 {
            return Err(fail("amount", format!("must be a non-negative number, got {amount_raw}")));
        }
        let tx_type: TxType = field(idx[5]).parse().map_err(|m| fail("tx_type", m))?;
        let label = match label_col.map(field).unwrap_or("") {
            "" => None,
            raw => Some(raw.parse::<Label>().map_err(|m| fail("label", m))?),
        };
        let scenario = scenario_col
            .map(field)
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        let values = extra
            .iter()
            .zip(&extra_idx)
            .map(|(name, &i)| {
                field(i)
                    .parse::<f64>()
                    .map_err(|_| fail(name, format!("`{}` is not a number", field(i))))
            })
            .collect::<Result<Vec<_>>>()?;

        rows.push((
            Transaction {
                tx_id: field(idx[0]).to_string(),
                timestamp,
                user_id: field(idx[2]).to_string(),
                terminal_id: field(idx[3]).to_string(),
                amount,
                tx_type,
                label,
                scenario,
            },
            values,
        ));
    }
    Ok(rows)
}

/// The base column block shared by the plain and enriched CSV exports.
pub(crate) fn base_header(with_scenario: bool) -> Vec<&'static str> {
    let mut h = vec!["tx_id", "timestamp", "user_id", "terminal_id", "amount", "tx_type", "label"];
    if with_scenario {
        h.push("scenario");
    }
    h
}

pub(crate) fn base_fields(t: &Transaction, with_scenario: bool) -> Vec<String> {
    let mut f = vec![
        t.tx_id.clone(),
        t.timestamp.to_string(),
        t.user_id.clone(),
        t.terminal_id.clone(),
        t.amount.to_string(),
        t.tx_type.to_string(),
        t.label.map(|l| l.as_str().to_string()).unwrap_or_default(),
    ];
    if with_scenario {
        f.push(t.scenario.clone().unwrap_or_default());
    }
    f
}

/// Serialize to the CSV format, timestamps as epoch seconds. The `scenario`
/// column is written only when some row carries a tag.
pub fn write_transactions(d: &Dataset) -> Result<String> {
    let with_scenario = d.has_scenarios();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(base_header(with_scenario))?;
    for t in &d.transactions {
        w.write_record(base_fields(t, with_scenario))?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
