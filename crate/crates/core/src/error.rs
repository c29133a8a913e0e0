use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Bad magic, unsupported version or otherwise unparseable file.
    #[error("format error: {0}")]
    Format(String),

    /// The file is shorter (or longer) than its header promises.
    #[error("truncated matrix file: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    /// Values that are syntactically fine but not acceptable (NaN, infinities, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row mismatch: {what} has {found} rows, expected {expected}")]
    RowMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("block id {block} is not contiguous (reappears at sample {sample})")]
    NonContiguousBlocks { block: i64, sample: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// R²_oos is undefined when the intercept-only model has zero error.
    #[error("undefined score for unit {unit}: intercept-only MSE is zero")]
    UndefinedScore { unit: usize },

    #[error("degenerate variance for unit {unit}: squared-error differences are constant and non-zero")]
    DegenerateVariance { unit: usize },

    #[error("linear algebra failure: {0}")]
    LinAlg(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
