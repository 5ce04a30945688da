use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape {shape:?}: product {product} != data length {len}")]
    InvalidShape {
        shape: Vec<usize>,
        product: usize,
        len: usize,
    },

    #[error("{op} produced a non-finite value (NaN/Inf)")]
    NonFinite { op: &'static str },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("tensor id {id} is not on this tape (len {len})")]
    NotOnTape { id: usize, len: usize },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    LossNotScalar { shape: Vec<usize> },

    #[error("missing parameter '{name}'")]
    MissingParam { name: String },

    #[error("missing gradient for parameter '{name}'")]
    MissingGrad { name: String },

    #[error("parameter '{name}': shape {found:?} does not match expected {expected:?}")]
    ParamShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("checkpoint stage '{found}' does not satisfy required stage '{expected}'")]
    StageMismatch { expected: String, found: String },

    #[error("checkpoint dtype '{found}' does not match requested '{expected}'")]
    DtypeMismatch {
        expected: &'static str,
        found: String,
    },

    #[error("architecture spec invalid: {0}")]
    InvalidSpec(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("checkpoint header JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
