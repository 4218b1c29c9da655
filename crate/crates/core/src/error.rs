use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty file: no data rows")]
    EmptyFile,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: value is not finite")]
    NonFinite { row: usize, column: String },
    #[error("only one class present (`{0}`); at least two are required")]
    SingleClass(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("class {class} has {count} samples; at least {required} are required")]
    ClassTooSmall {
        class: usize,
        count: usize,
        required: usize,
    },
    #[error("{0} partition is empty")]
    EmptyPartition(&'static str),
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown classifier kind `{0}`")]
    UnknownClassifier(String),
    #[error("classifier `{name}` failed in fold {fold}: {message}")]
    Training { name: String, fold: usize, message: String },
    #[error("external predictions: missing sample index {0}")]
    MissingPrediction(usize),
    #[error("external predictions: probabilities for sample {index} sum to {sum}")]
    BadProbabilities { index: usize, sum: f64 },
    #[error("external classifier `{0}` can only score rows it has predictions for")]
    ExternalQuery(String),
    #[error("all vote weights are zero")]
    ZeroWeights,
    #[error("LP solver failed: {reason}\n{dump}")]
    Lp { reason: String, dump: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("unsupported format version {0}")]
    FormatVersion(u32),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
