use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid value for `{key}`: {reason}")]
    ConfigValue { key: String, reason: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("value {value} outside range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("timestep {t} outside [1, {max}]")]
    Timestep { t: usize, max: usize },

    #[error("{path}: row {row}, column {column}: {reason}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        reason: String,
    },

    #[error("{path}: {reason}")]
    Format { path: String, reason: String },

    #[error("covariance for bin {bin} is singular after regularization")]
    SingularCovariance { bin: usize },

    #[error("unknown bin {bin} (have {bins})")]
    UnknownBin { bin: usize, bins: usize },

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("sampling produced NaN at timestep {t}")]
    SamplingNan { t: usize },

    #[error("missing prerequisite artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("report mismatch: {0}")]
    ReportMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn value(key: &str, reason: impl Into<String>) -> Self {
        Error::ConfigValue {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
