use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("transcript line {line}: {msg}")]
    Transcript { line: usize, msg: String },

    #[error("transcript entries overlap: [{a_start}, {a_end}) and [{b_start}, {b_end})")]
    Overlap {
        a_start: u64,
        a_end: u64,
        b_start: u64,
        b_end: u64,
    },

    #[error("gesture '{0}' has no class mapping")]
    UnknownGesture(String),

    #[error("task '{0}' is not one of the three task names")]
    UnknownTask(String),

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("image size mismatch: {a_h}x{a_w} vs {b_h}x{b_w}")]
    SizeMismatch {
        a_h: usize,
        a_w: usize,
        b_h: usize,
        b_w: usize,
    },

    #[error("segment '{id}': {msg}")]
    Segment { id: String, msg: String },

    #[error("png: {0}")]
    PngDecode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<png::DecodingError> for DataError {
    fn from(e: png::DecodingError) -> Self {
        DataError::PngDecode(e.to_string())
    }
}

impl From<png::EncodingError> for DataError {
    fn from(e: png::EncodingError) -> Self {
        DataError::PngDecode(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DataError>;
