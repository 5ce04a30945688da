//! Data pipeline: annotated videos → labeled gesture segments with paired
//! RGB and flow-RGB frames, a synthetic generator with decoupled
//! appearance/motion labels, and train/test splits.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod flow;
pub mod image;
pub mod splits;
pub mod synth;
pub mod transcript;

pub use dataset::{SegmentLabels, VideoSegment};
pub use error::{DataError, Result};
pub use flow::{compute_flow, decode_flow_rgb, encode_flow_rgb, FlowField, HornSchunckParams};
pub use image::ImageU8;
pub use splits::Split;
pub use synth::{synth_generate, SynthConfig};
