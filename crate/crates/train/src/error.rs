use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("stage {stage}: non-finite loss at iteration {iteration}: {source}")]
    NonFiniteLoss {
        stage: String,
        iteration: u64,
        source: gestnet_core::CoreError,
    },

    #[error("stage {stage} requires {what}")]
    MissingInit { stage: String, what: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("segment '{id}' has {len} frames, fewer than clip length {need}")]
    SegmentTooShort { id: String, len: usize, need: usize },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error(transparent)]
    Core(#[from] gestnet_core::CoreError),

    #[error(transparent)]
    Data(#[from] gestnet_data::DataError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
