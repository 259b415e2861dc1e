use std::path::PathBuf;

/// Errors raised across the trainer, evaluator, and analysis tools.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("embedding file: {reason} at line {line}")]
    EmbeddingParse { line: usize, reason: String },

    #[error("corpus line {line} (dialogue {id:?}): {reason}")]
    CorpusParse {
        line: usize,
        id: Option<String>,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough candidate sentences: requested {requested}, available {available}")]
    NotEnoughCandidates { requested: usize, available: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate paired sample")]
    DegeneratePairedSample,

    #[error("pearson correlation undefined: both inputs are constant")]
    UndefinedCorrelation,

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
