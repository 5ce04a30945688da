//! Run configuration: one structured document covering the data pipeline,
//! all training stages, and inference. Every run freezes its effective
//! config next to its outputs; the frozen copy reproduces the run.

use std::fs;
use std::path::Path;

use gestnet_core::network::ArchitectureSpec;
use gestnet_core::{fnv1a64, Scalar};
use gestnet_data::flow::HornSchunckParams;
use gestnet_data::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// "paper" or "desk".
    pub profile: String,
    pub seed: u64,
    /// Training scalar type: "f32" (default) or "f64".
    pub precision: String,

    // Data pipeline.
    pub source_fps: f64,
    pub extraction_fps: f64,
    pub extract_h: usize,
    pub extract_w: usize,
    pub train_h: usize,
    pub train_w: usize,
    pub crop: usize,
    pub mirror_augment: bool,
    pub clip_mag: f64,
    pub flow: HornSchunckParams,
    /// Segments with fewer sampled frames than this are dropped at ingest.
    pub min_segment_frames: usize,

    // Clip protocol.
    pub clip_len: usize,
    pub clip_stride: usize,

    // Optimization.
    pub batch: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub step_period: u64,
    pub step_factor: f64,
    pub clip_threshold: f64,
    pub max_iters_frame: u64,
    pub max_iters_lstm: u64,
    pub max_iters_joint: u64,
    pub checkpoint_interval: u64,

    pub architecture: ArchitectureSpec,
    pub synth: SynthConfig,
}

impl RunConfig {
    /// Full-scale profile with the published constants: lr 0.001, weight
    /// decay 0.005, ×0.1 every 20k iterations, gradient clip 15, stage
    /// budgets 40k/60k/90k, 256 hidden units, 8-frame clips at stride 4,
    /// 227×227 crops from 240×320 resizes, 8 fps extraction.
    pub fn paper() -> Self {
        RunConfig {
            profile: "paper".into(),
            seed: 1,
            precision: "f32".into(),
            source_fps: 30.0,
            extraction_fps: 8.0,
            extract_h: 480,
            extract_w: 640,
            train_h: 240,
            train_w: 320,
            crop: 227,
            mirror_augment: true,
            clip_mag: 8.0,
            flow: HornSchunckParams::default(),
            min_segment_frames: 8,
            clip_len: 8,
            clip_stride: 4,
            batch: 8,
            base_lr: 0.001,
            weight_decay: 0.005,
            step_period: 20_000,
            step_factor: 0.1,
            clip_threshold: 15.0,
            max_iters_frame: 40_000,
            max_iters_lstm: 60_000,
            max_iters_joint: 90_000,
            checkpoint_interval: 5_000,
            architecture: ArchitectureSpec::paper(),
            synth: SynthConfig::default(),
        }
    }

    /// Desk-scale profile: synthetic 56×56 data, reduced widths and
    /// budgets, everything verifiable on a CPU in minutes. Mirroring is
    /// off because the synthetic gesture labels are direction-defined.
    pub fn desk() -> Self {
        RunConfig {
            profile: "desk".into(),
            seed: 1,
            precision: "f32".into(),
            source_fps: 30.0,
            extraction_fps: 8.0,
            extract_h: 56,
            extract_w: 56,
            train_h: 56,
            train_w: 56,
            crop: 56,
            mirror_augment: false,
            clip_mag: 8.0,
            flow: HornSchunckParams::default(),
            min_segment_frames: 8,
            clip_len: 8,
            clip_stride: 4,
            batch: 8,
            base_lr: 0.02,
            weight_decay: 0.0005,
            step_period: 100_000,
            step_factor: 0.1,
            clip_threshold: 15.0,
            max_iters_frame: 1000,
            max_iters_lstm: 500,
            max_iters_joint: 800,
            checkpoint_interval: 200,
            architecture: ArchitectureSpec::desk(),
            synth: SynthConfig {
                segments: 160,
                ..SynthConfig::default()
            },
        }
    }

    pub fn by_profile(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(TrainError::InvalidArgument {
                op: "config",
                msg: format!("unknown profile '{other}' (expected paper|desk)"),
            }),
        }
    }

    pub fn max_iters_for(&self, stage: gestnet_core::network::StageTag) -> u64 {
        use gestnet_core::network::StageTag::*;
        match stage {
            FrameRgb | FrameFlow => self.max_iters_frame,
            LstmRgb | LstmFlow => self.max_iters_lstm,
            Joint => self.max_iters_joint,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture
            .validate()
            .map_err(TrainError::Core)?;
        let checks: [(&str, bool); 10] = [
            ("precision must be f32 or f64", self.precision == "f32" || self.precision == "f64"),
            ("batch must be positive", self.batch >= 1),
            ("clip_len must be positive", self.clip_len >= 1),
            ("clip_stride must be positive", self.clip_stride >= 1),
            ("crop must fit train size", self.crop <= self.train_h && self.crop <= self.train_w),
            ("crop must match architecture input", self.crop == self.architecture.input_h),
            ("base_lr must be nonnegative", self.base_lr >= 0.0),
            ("step_period must be positive", self.step_period >= 1),
            ("clip_threshold must be positive", self.clip_threshold > 0.0),
            ("extraction_fps must be positive", self.extraction_fps > 0.0),
        ];
        for (msg, ok) in checks {
            if !ok {
                return Err(TrainError::InvalidArgument {
                    op: "config",
                    msg: msg.into(),
                });
            }
        }
        Ok(())
    }

    /// Canonical JSON bytes (pretty, stable field order).
    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        serde_path_to_error::deserialize(&mut de).map_err(|e| TrainError::InvalidArgument {
            op: "config",
            msg: format!("field '{}': {}", e.path(), e.inner()),
        })
    }

    /// Stable fingerprint of the effective config, recorded in every
    /// metrics report.
    pub fn hash(&self) -> Result<String> {
        Ok(format!("{:016x}", fnv1a64(&self.to_json()?)))
    }

    /// Write the frozen effective config beside a run's outputs.
    pub fn freeze(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("config.json"), self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read(path)?)
    }

    pub fn optimizer(&self) -> gestnet_core::optim::OptimizerState {
        gestnet_core::optim::OptimizerState::new(
            self.base_lr,
            self.weight_decay,
            self.step_period,
            self.step_factor,
            self.clip_threshold,
        )
    }

    pub fn uses<S: Scalar>(&self) -> bool {
        self.precision == S::DTYPE
    }
}
