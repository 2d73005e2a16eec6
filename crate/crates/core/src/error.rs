use thiserror::Error;

pub type Result<T, E = KoopmanError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KoopmanError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Every singular value fell at or below the truncation threshold.
    #[error("empty rank: {0}")]
    EmptyRank(String),

    #[error("ill-conditioned input: {0}")]
    Conditioning(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("trajectory diverged at step {step}")]
    Divergence { step: usize },

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("model file: {0}")]
    Schema(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl KoopmanError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Self::Shape(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Self::Parse {
            line,
            message: msg.into(),
        }
    }
}
