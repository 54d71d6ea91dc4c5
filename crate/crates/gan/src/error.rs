use thiserror::Error;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("no usable pairs in the requested split")]
    EmptyDataset,

    /// Non-finite loss encountered; the last checkpoint was preserved.
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: u64, detail: String },

    #[error("value domain mismatch: {0}")]
    Domain(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] rgb2dem_core::CoreError),

    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for GanError {
    fn from(e: serde_json::Error) -> Self {
        GanError::Format(format!("json: {e}"))
    }
}

impl From<csv::Error> for GanError {
    fn from(e: csv::Error) -> Self {
        GanError::Format(format!("csv: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, GanError>;
