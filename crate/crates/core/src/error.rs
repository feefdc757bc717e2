use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),

    #[error("noise is shorter than the clean signal ({noise} < {clean} samples)")]
    NoiseTooShort { noise: usize, clean: usize },

    #[error("{0} signal has zero power")]
    ZeroPower(&'static str),

    #[error("invalid feature config: {0}")]
    InvalidFeatureConfig(String),

    #[error("invalid utterance spec: {0}")]
    InvalidUtteranceSpec(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("duplicate utterance id {0:?}")]
    DuplicateId(String),

    #[error("unknown utterance {0:?}")]
    UnknownUtterance(String),

    #[error("missing weights for {0}")]
    MissingWeights(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("bad weight file: {0}")]
    WeightFormat(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("WAV error: {0}")]
    Wav(#[from] hound::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a short description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
