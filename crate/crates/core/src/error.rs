use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Input has no usable data (all pixels masked, empty band, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Tile is in the wrong value domain for the requested operation.
    #[error("value domain mismatch: expected {expected}, found {found}")]
    DomainMismatch { expected: String, found: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Tiles or masks of incompatible dimensions.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    /// SSIM filtering requested before the named pairs were scored.
    #[error("missing ssim scores for pairs: {0:?}")]
    MissingScores(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl From<tiff::TiffError> for CoreError {
    fn from(e: tiff::TiffError) -> Self {
        CoreError::Format(format!("tiff: {e}"))
    }
}

impl From<image::ImageError> for CoreError {
    fn from(e: image::ImageError) -> Self {
        CoreError::Format(format!("image: {e}"))
    }
}

impl From<serde_json::Error> for CoreError {
    fn from(e: serde_json::Error) -> Self {
        CoreError::Format(format!("json: {e}"))
    }
}

impl From<csv::Error> for CoreError {
    fn from(e: csv::Error) -> Self {
        CoreError::Format(format!("csv: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
