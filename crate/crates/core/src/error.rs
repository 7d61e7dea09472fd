use std::path::PathBuf;

use chrono::{DateTime, FixedOffset};
use thiserror::Error;

/// Errors raised anywhere in the alignment pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("timestamp {0} is outside the trading calendar")]
    CalendarGap(DateTime<FixedOffset>),

    #[error("embedding has zero norm")]
    DegenerateEmbedding,

    #[error("schema error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Schema { line: Option<usize>, message: String },

    #[error("embedding at line {line} has norm {norm:.9}, expected 1")]
    Norm { line: usize, norm: f64 },

    #[error("bundle {ticker}/{day} is missing its {missing} side")]
    IncompleteBundle {
        ticker: String,
        day: String,
        missing: &'static str,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("exact oracle limited to n*m <= 64, got {n}x{m}")]
    OracleTooLarge { n: usize, m: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("ridge normal equations are singular")]
    SingularSystem,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("sharpe ratio undefined: zero standard deviation")]
    UndefinedSharpe,

    #[error("stage `{stage}` cannot run: {missing}")]
    StageDependency { stage: String, missing: String },

    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigIssue>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One configuration violation, addressed by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Schema {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
