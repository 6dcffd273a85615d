use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated data: {0}")]
    Truncated(String),
    #[error("corrupt data: {0}")]
    CorruptData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("alignment error at streamline {index}: {detail}")]
    Alignment { index: usize, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("duplicate subject id `{0}`")]
    DuplicateId(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("cluster {cluster} has no `{channel}` channel")]
    MissingChannel { cluster: u32, channel: String },
    #[error("no reference value: every cluster is missing")]
    NoReference,
    #[error("degenerate reference value {0} with positive entries present")]
    DegenerateReference(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("subject id mismatch: {0}")]
    SubjectMismatch(String),
    #[error("fold assignment mismatch: {0}")]
    FoldMismatch(String),
    #[error("leakage: {0}")]
    Leakage(String),
    #[error("batch-norm running statistics are not initialized")]
    StatsUninitialized,
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
