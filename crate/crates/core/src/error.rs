use chrono::{DateTime, NaiveDate, Utc};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, EpfError>;

#[derive(Debug, Error)]
pub enum EpfError {
    #[error("malformed series `{name}`: {reason}")]
    MalformedSeries { name: String, reason: String },

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error("variable `{variable}` not found in {path} (available: {})", available.join(", "))]
    VariableNotFound {
        path: String,
        variable: String,
        available: Vec<String>,
    },

    #[error("invalid config `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("insufficient history: earliest feasible target day is {earliest}")]
    InsufficientHistory { earliest: NaiveDate },

    #[error("missing value in series `{series}` at {timestamp}")]
    MissingValue {
        series: String,
        timestamp: DateTime<Utc>,
    },

    #[error("series `{0}` not present in dataset")]
    MissingSeries(String),

    #[error("lasso did not converge after {sweeps} sweeps (duality gap estimate {gap:.3e})")]
    NonConvergence { sweeps: usize, gap: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<EpfError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl EpfError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        EpfError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Innermost error, skipping any context wrappers.
    pub fn root(&self) -> &EpfError {
        match self {
            EpfError::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub trait ResultExt<T> {
    fn context<C: Into<String>>(self, context: impl FnOnce() -> C) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context<C: Into<String>>(self, context: impl FnOnce() -> C) -> Result<T> {
        self.map_err(|e| EpfError::Context {
            context: context().into(),
            source: Box::new(e),
        })
    }
}
