use thiserror::Error;

/// Errors raised by the library. Degenerate numeric cases (zero variance,
/// empty denominators) are not errors; they surface as `None` values.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("input is not sorted by timestamp at row {index}")]
    Unsorted { index: usize },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: String, message: String },

    #[error("dataset too small: {0}")]
    TooSmall(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("feature schema mismatch: missing {missing:?}, extra {extra:?}")]
    SchemaMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("non-finite value in feature `{feature}` at row {row}")]
    NonFinite { feature: String, row: usize },

    #[error("training data must contain both classes")]
    SingleClass,

    #[error("no minority-class rows to resample around")]
    NoMinority,

    #[error("metric `{metric}` is missing from the {side} report")]
    MissingMetric { metric: String, side: String },

    #[error("reports were computed on different test sets ({baseline} vs {timetrail})")]
    FingerprintMismatch { baseline: String, timetrail: String },

    #[error("fraud count rounds to zero for {target_rows} rows at rate {fraud_rate}; increase target_rows")]
    NoFraudRows { target_rows: usize, fraud_rate: f64 },

    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the root cause is a failed read or write rather than bad input.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) | Error::File { .. } => true,
            Error::Stage { source, .. } => source.is_io(),
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            _ => false,
        }
    }

    pub fn in_stage(self, stage: &str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &str, message: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_string(),
        message: message.into(),
    }
}
