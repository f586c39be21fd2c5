use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("message of {len} bytes exceeds capacity {capacity} for version {version} level {level}")]
    CapacityExceeded {
        len: usize,
        capacity: usize,
        version: u8,
        level: char,
    },
    #[error("invalid version {0} (expected 1..=40)")]
    InvalidVersion(u32),
    #[error("invalid mask pattern {0} (expected 0..=7)")]
    InvalidMask(u8),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("uncorrectable codeword errors in block {block}")]
    Unrecoverable { block: usize },
    #[error("format information is corrupt")]
    FormatError,
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("module grid does not fit inside a {width}x{height} image")]
    GridOutOfBounds { width: usize, height: usize },
    #[error("no finder pattern triad found")]
    NotFound,
    #[error("{count} pixels lie strictly inside the binarization dead zone")]
    DeadZonePixels { count: usize },
    #[error("input matrix is not symmetric")]
    NonSymmetricInput,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from reading or writing files rather than
    /// from the pipeline's own domain rules.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Image(_) | Error::Json(_))
    }

    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
