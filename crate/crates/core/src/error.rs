use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: malformed JSON, invalid parameter values, unknown columns.
    #[error("config error: {0}")]
    Config(String),

    /// Bad input data: unparsable cells, inconsistent lengths, empty groups.
    #[error("data error: {0}")]
    Data(String),

    /// Shape mismatch between matrices or vectors.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A structural precondition failed (overlapping partitions, id collisions, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Treatment vector contains a single class; a propensity model cannot be fit.
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    /// Exchange-directory contents do not match the manifest.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// An operation would violate the dimensionality-reduction privacy constraint.
    #[error("privacy violation: {0}")]
    Privacy(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 integrity/privacy, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Data(_)
            | Error::Dimension(_)
            | Error::Validation(_)
            | Error::DegenerateLabels(_)
            | Error::Csv(_) => 3,
            Error::Integrity(_) | Error::Privacy(_) => 4,
            Error::Io(_) => 1,
        }
    }
}
