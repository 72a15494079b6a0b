use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch at layer {layer}: {detail}")]
    Dimension { layer: usize, detail: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("label is ambiguous: {0}")]
    AmbiguousLabel(String),

    #[error("fully-connected layer is not invertible: {0}")]
    NonInvertible(String),

    #[error("cosine distance undefined for a zero vector")]
    UndefinedDistance,

    #[error("condition number undefined for a matrix of numeric rank zero")]
    UndefinedCondition,

    #[error("LAPACK {routine} failed at layer {layer:?} (info = {info})")]
    Lapack {
        routine: &'static str,
        layer: Option<usize>,
        info: i32,
    },

    #[error("objective is not finite at the initial point")]
    Initialization,

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("record index {index} out of range (file holds {count} records)")]
    Bounds { index: usize, count: usize },

    #[error("unknown architecture `{name}`; valid names: {valid}")]
    Catalog { name: String, valid: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(layer: usize, detail: impl Into<String>) -> Self {
        Error::Dimension {
            layer,
            detail: detail.into(),
        }
    }
}
