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
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    Arity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    UnparseableNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: unknown class label `{label}`")]
    UnknownLabel { row: usize, label: String },
    #[error("row {row}: missing class label")]
    MissingLabel { row: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("K = {k} is smaller than the number of classes J = {j}")]
    TooFewClusters { k: usize, j: usize },
    #[error("class {0} has no instances")]
    EmptyClass(usize),
    #[error("at least two classes are required, found {0}")]
    SingleClass(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
