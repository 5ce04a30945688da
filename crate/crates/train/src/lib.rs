//! Staged training protocol, clip-averaged inference with two-level
//! prediction averaging, evaluation metrics, and the joint-vs-separate
//! baseline comparison.

pub mod clips;
pub mod compare;
pub mod config;
pub mod error;
pub mod metrics;
pub mod predict;
pub mod trainer;

pub use clips::{clip_starts, extract_clips, ClipSequence};
pub use compare::{run_baseline_comparison, ComparisonReport};
pub use config::RunConfig;
pub use error::{Result, TrainError};
pub use metrics::{evaluate, MetricsReport};
pub use predict::{predict_segment, SegmentPrediction};
pub use trainer::{train_full_pipeline, train_stage, StageInit, TrainOutcome};
