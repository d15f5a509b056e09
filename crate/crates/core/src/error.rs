use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("action component {index} = {value} outside [{lo}, {hi}]")]
    ActionOutOfBounds { index: usize, value: f64, lo: f64, hi: f64 },

    #[error("empty support: every candidate has zero resampling weight")]
    EmptySupport,

    #[error("filtered to empty at iteration {iteration}")]
    FilteredToEmpty { iteration: usize },

    #[error("density fit failed at iteration {iteration}: {source}")]
    DensityFit {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("learner update failed at episode {episode}: {source}")]
    LearnerUpdate {
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("env mismatch: {expected} vs {got}")]
    EnvMismatch { expected: String, got: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed record: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
