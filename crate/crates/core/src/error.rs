use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("missing header tag {0}")]
    MissingTag(&'static str),

    #[error("validation error at row {row}: {msg}")]
    Validation { row: usize, msg: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("index {index} out of range for {len} rows in {op}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("scenario infeasible: {demand} trips of positive demand are unreachable{}", location(.task_id, .od_id))]
    ScenarioInfeasible {
        demand: f64,
        task_id: Option<usize>,
        od_id: Option<usize>,
    },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("adaptation error at inner step {step}: loss is not finite")]
    Adaptation { step: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
}

fn location(task: &Option<usize>, od: &Option<usize>) -> String {
    match (task, od) {
        (Some(t), Some(o)) => format!(" (task {t}, od {o})"),
        (Some(t), None) => format!(" (task {t})"),
        (None, Some(o)) => format!(" (od {o})"),
        (None, None) => String::new(),
    }
}

impl Error {
    /// Short stable identifier used as the machine-readable prefix in CLI
    /// error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) | Error::MissingTag(_) => "parse",
            Error::Validation { .. } | Error::InvalidNetwork(_) => "validation",
            Error::Io { .. } => "io",
            Error::UnsupportedVersion { .. } => "unsupported-version",
            Error::Integrity(_) => "integrity",
            Error::Shape { .. } => "shape",
            Error::Index { .. } => "index",
            Error::Contract(_) => "contract",
            Error::ScenarioInfeasible { .. } => "infeasible",
            Error::Generation(_) => "generation",
            Error::Config(_) => "config",
            Error::Adaptation { .. } => "adaptation",
            Error::NonFinite(_) => "non-finite",
            Error::UndefinedMetric(_) => "metric",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
