use std::path::PathBuf;

/// Broad failure category, used by front-ends to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in `{op}`: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by `{op}` (node {node})")]
    NonFinite { op: &'static str, node: usize },

    #[error("backward needs a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("history too short: need {needed} values, got {got}")]
    HistoryTooShort { needed: usize, got: usize },

    #[error("rule {rule} produced a non-finite forecast (unstable AR polynomial?)")]
    UnstableRule { rule: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("{path}: duplicate date {date} at line {line}")]
    DuplicateDate {
        path: String,
        date: String,
        line: u64,
    },

    #[error("{path}: non-finite value at line {line}")]
    NonFiniteValue { path: String, line: u64 },

    #[error(
        "fetch failed for {url}: {msg} (place the CSV locally and use it as a file source instead)"
    )]
    Fetch { url: String, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::ShapeMismatch { .. }
            | Error::NonFinite { .. }
            | Error::NonScalarRoot(_)
            | Error::NotPositiveDefinite
            | Error::UnstableRule { .. }
            | Error::Fit(_)
            | Error::Diverged { .. } => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
