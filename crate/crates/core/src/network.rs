//! Assembly of the three network forms and the staged weight transfer
//! between them:
//!
//! 1. per-frame CNN (one modality, no recurrence, both heads),
//! 2. per-modality recurrent net (conv body + dense transferred from 1,
//!    LSTM and heads fresh),
//! 3. joint two-stream net (each stream's conv body transferred from its
//!    recurrent net; fusion reduction conv, dense projection, LSTM and
//!    heads fresh — none of those have a single-stream counterpart).
//!
//! Per-frame forward of the joint form:
//! `conv5_rgb ∥ conv5_flow → concat → reduction conv → pool → dense →
//! recurrent step → two softmax heads`.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::layers::{
    dense, init_params, lstm_param_specs, lstm_step, lstm_zero_state, multi_task_loss,
    Init, LstmParamIds, MultiTaskLoss, ParamSet, ParamSpec,
};
use crate::scalar::Scalar;
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

// ── Architecture description ─────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub k: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// Pooling applied directly after this layer's ReLU, if any.
    pub pool: Option<PoolSpec>,
}

/// Structural description of the classifier. Both streams of the joint form
/// share this topology; only their parameters differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub profile: String,
    pub input_channels: usize,
    pub input_h: usize,
    pub input_w: usize,
    /// The five-layer conv stack of one stream, with interleaved pooling.
    pub conv: Vec<ConvSpec>,
    /// Pool that follows conv5 in single-stream forms and the reduction
    /// conv in the joint form (fusion happens before this pool).
    pub final_pool: PoolSpec,
    /// Output channels of the fusion reduction conv (its input is the
    /// concatenation of both streams' conv5 channels).
    pub reduction_channels: usize,
    pub reduction_kernel: usize,
    /// Width of the dense projection feeding the heads / recurrent layer.
    pub dense_width: usize,
    pub hidden_size: usize,
    pub gesture_classes: usize,
    pub task_classes: usize,
}

impl ArchitectureSpec {
    /// Full-scale profile. Matches the reference five-conv-layer body
    /// (96/256/384/384/256), 256 hidden units, and 14 + 3 heads; recorded
    /// for configuration snapshots even where CPU training is impractical.
    pub fn paper() -> Self {
        ArchitectureSpec {
            profile: "paper".into(),
            input_channels: 3,
            input_h: 227,
            input_w: 227,
            conv: vec![
                ConvSpec { out_channels: 96, kernel: 7, stride: 2, pad: 0, pool: Some(PoolSpec { k: 3, stride: 2 }) },
                ConvSpec { out_channels: 256, kernel: 5, stride: 2, pad: 0, pool: Some(PoolSpec { k: 3, stride: 2 }) },
                ConvSpec { out_channels: 384, kernel: 3, stride: 1, pad: 1, pool: None },
                ConvSpec { out_channels: 384, kernel: 3, stride: 1, pad: 1, pool: None },
                ConvSpec { out_channels: 256, kernel: 3, stride: 1, pad: 1, pool: None },
            ],
            final_pool: PoolSpec { k: 3, stride: 2 },
            reduction_channels: 256,
            reduction_kernel: 1,
            dense_width: 4096,
            hidden_size: 256,
            gesture_classes: 14,
            task_classes: 3,
        }
    }

    /// Desk-scale profile: small enough that finite-difference checks and
    /// full staged training runs finish on a CPU in minutes.
    pub fn desk() -> Self {
        ArchitectureSpec {
            profile: "desk".into(),
            input_channels: 3,
            input_h: 56,
            input_w: 56,
            conv: vec![
                ConvSpec { out_channels: 16, kernel: 5, stride: 2, pad: 2, pool: Some(PoolSpec { k: 2, stride: 2 }) },
                ConvSpec { out_channels: 32, kernel: 3, stride: 1, pad: 1, pool: Some(PoolSpec { k: 2, stride: 2 }) },
                ConvSpec { out_channels: 32, kernel: 3, stride: 1, pad: 1, pool: None },
                ConvSpec { out_channels: 32, kernel: 3, stride: 1, pad: 1, pool: None },
                ConvSpec { out_channels: 32, kernel: 3, stride: 1, pad: 1, pool: None },
            ],
            final_pool: PoolSpec { k: 2, stride: 2 },
            reduction_channels: 32,
            reduction_kernel: 1,
            dense_width: 64,
            hidden_size: 32,
            gesture_classes: 14,
            task_classes: 3,
        }
    }

    /// Miniature profile for exhaustive gradient verification: every
    /// coordinate of every parameter can be finite-differenced in seconds.
    pub fn tiny() -> Self {
        ArchitectureSpec {
            profile: "tiny".into(),
            input_channels: 2,
            input_h: 12,
            input_w: 12,
            conv: vec![
                ConvSpec { out_channels: 2, kernel: 3, stride: 2, pad: 1, pool: Some(PoolSpec { k: 2, stride: 2 }) },
                ConvSpec { out_channels: 3, kernel: 3, stride: 1, pad: 1, pool: None },
                ConvSpec { out_channels: 3, kernel: 3, stride: 1, pad: 1, pool: None },
                ConvSpec { out_channels: 3, kernel: 3, stride: 1, pad: 1, pool: None },
                ConvSpec { out_channels: 3, kernel: 3, stride: 1, pad: 1, pool: None },
            ],
            final_pool: PoolSpec { k: 3, stride: 1 },
            reduction_channels: 3,
            reduction_kernel: 1,
            dense_width: 5,
            hidden_size: 4,
            gesture_classes: 4,
            task_classes: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv.is_empty() {
            return Err(CoreError::InvalidSpec("empty conv stack".into()));
        }
        for (name, v) in [
            ("input_channels", self.input_channels),
            ("input_h", self.input_h),
            ("input_w", self.input_w),
            ("reduction_channels", self.reduction_channels),
            ("reduction_kernel", self.reduction_kernel),
            ("dense_width", self.dense_width),
            ("hidden_size", self.hidden_size),
            ("gesture_classes", self.gesture_classes),
            ("task_classes", self.task_classes),
        ] {
            if v == 0 {
                return Err(CoreError::InvalidSpec(format!("{name} must be positive")));
            }
        }
        // Walking the shapes catches kernels that do not fit.
        self.conv5_shape()?;
        self.single_feature_len()?;
        self.joint_feature_len()?;
        Ok(())
    }

    fn conv_out(extent: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
        if stride == 0 {
            return Err(CoreError::InvalidSpec("conv stride 0".into()));
        }
        if extent + 2 * pad < kernel {
            return Err(CoreError::InvalidSpec(format!(
                "kernel {kernel} does not fit padded extent {}",
                extent + 2 * pad
            )));
        }
        Ok((extent + 2 * pad - kernel) / stride + 1)
    }

    fn pool_out(extent: usize, pool: &PoolSpec) -> Result<usize> {
        if pool.stride == 0 || pool.k == 0 {
            return Err(CoreError::InvalidSpec("pool window/stride 0".into()));
        }
        if pool.k > extent {
            return Err(CoreError::InvalidSpec(format!(
                "pool window {} larger than extent {extent}",
                pool.k
            )));
        }
        Ok((extent - pool.k) / pool.stride + 1)
    }

    /// Shape `(C, H, W)` of one stream's conv5 activations (before the
    /// final pool — the joint form fuses here).
    pub fn conv5_shape(&self) -> Result<(usize, usize, usize)> {
        let mut c = self.input_channels;
        let mut h = self.input_h;
        let mut w = self.input_w;
        for layer in &self.conv {
            h = Self::conv_out(h, layer.kernel, layer.stride, layer.pad)?;
            w = Self::conv_out(w, layer.kernel, layer.stride, layer.pad)?;
            c = layer.out_channels;
            if let Some(pool) = &layer.pool {
                h = Self::pool_out(h, pool)?;
                w = Self::pool_out(w, pool)?;
            }
        }
        Ok((c, h, w))
    }

    /// Flattened feature length feeding the dense projection in
    /// single-stream forms: conv5 → final pool → flatten.
    pub fn single_feature_len(&self) -> Result<usize> {
        let (c, h, w) = self.conv5_shape()?;
        let ph = Self::pool_out(h, &self.final_pool)?;
        let pw = Self::pool_out(w, &self.final_pool)?;
        Ok(c * ph * pw)
    }

    /// Flattened feature length in the joint form: concat of both conv5
    /// outputs → reduction conv → final pool → flatten.
    pub fn joint_feature_len(&self) -> Result<usize> {
        let (_, h, w) = self.conv5_shape()?;
        let rk = self.reduction_kernel;
        let rh = Self::conv_out(h, rk, 1, rk / 2)?;
        let rw = Self::conv_out(w, rk, 1, rk / 2)?;
        let ph = Self::pool_out(rh, &self.final_pool)?;
        let pw = Self::pool_out(rw, &self.final_pool)?;
        Ok(self.reduction_channels * ph * pw)
    }

    /// Channel count entering the fusion reduction conv: the sum of the two
    /// streams' conv5 channels.
    pub fn fusion_in_channels(&self) -> usize {
        2 * self.conv.last().map(|l| l.out_channels).unwrap_or(0)
    }

    /// Total trainable elements of a given form, computed arithmetically
    /// (no allocation).
    pub fn parameter_count(&self, form: NetworkForm) -> Result<usize> {
        let conv_stack: usize = {
            let mut c_in = self.input_channels;
            let mut total = 0;
            for layer in &self.conv {
                total += layer.out_channels * c_in * layer.kernel * layer.kernel
                    + layer.out_channels;
                c_in = layer.out_channels;
            }
            total
        };
        let dense_of = |input: usize| input * self.dense_width + self.dense_width;
        let heads_of = |input: usize| {
            input * self.gesture_classes
                + self.gesture_classes
                + input * self.task_classes
                + self.task_classes
        };
        let lstm = 4 * ((self.dense_width + self.hidden_size) * self.hidden_size + self.hidden_size);
        Ok(match form {
            NetworkForm::Frame(_) => {
                conv_stack + dense_of(self.single_feature_len()?) + heads_of(self.dense_width)
            }
            NetworkForm::Recurrent(_) => {
                conv_stack + dense_of(self.single_feature_len()?) + lstm + heads_of(self.hidden_size)
            }
            NetworkForm::Joint => {
                let reduce = self.reduction_channels
                    * self.fusion_in_channels()
                    * self.reduction_kernel
                    * self.reduction_kernel
                    + self.reduction_channels;
                2 * conv_stack
                    + reduce
                    + dense_of(self.joint_feature_len()?)
                    + lstm
                    + heads_of(self.hidden_size)
            }
        })
    }
}

// ── Forms, stages, modalities ────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Flow,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Modality::Rgb => write!(f, "rgb"),
            Modality::Flow => write!(f, "flow"),
        }
    }
}

/// Training-stage tag carried by checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageTag {
    #[serde(rename = "frame-rgb")]
    FrameRgb,
    #[serde(rename = "frame-flow")]
    FrameFlow,
    #[serde(rename = "lstm-rgb")]
    LstmRgb,
    #[serde(rename = "lstm-flow")]
    LstmFlow,
    #[serde(rename = "joint")]
    Joint,
}

impl StageTag {
    pub fn frame(modality: Modality) -> Self {
        match modality {
            Modality::Rgb => StageTag::FrameRgb,
            Modality::Flow => StageTag::FrameFlow,
        }
    }

    pub fn lstm(modality: Modality) -> Self {
        match modality {
            Modality::Rgb => StageTag::LstmRgb,
            Modality::Flow => StageTag::LstmFlow,
        }
    }

    pub fn form(self) -> NetworkForm {
        match self {
            StageTag::FrameRgb => NetworkForm::Frame(Modality::Rgb),
            StageTag::FrameFlow => NetworkForm::Frame(Modality::Flow),
            StageTag::LstmRgb => NetworkForm::Recurrent(Modality::Rgb),
            StageTag::LstmFlow => NetworkForm::Recurrent(Modality::Flow),
            StageTag::Joint => NetworkForm::Joint,
        }
    }
}

impl std::fmt::Display for StageTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StageTag::FrameRgb => "frame-rgb",
            StageTag::FrameFlow => "frame-flow",
            StageTag::LstmRgb => "lstm-rgb",
            StageTag::LstmFlow => "lstm-flow",
            StageTag::Joint => "joint",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for StageTag {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "frame-rgb" => StageTag::FrameRgb,
            "frame-flow" => StageTag::FrameFlow,
            "lstm-rgb" => StageTag::LstmRgb,
            "lstm-flow" => StageTag::LstmFlow,
            "joint" => StageTag::Joint,
            other => {
                return Err(CoreError::InvalidArgument {
                    op: "stage",
                    msg: format!("unknown stage '{other}'"),
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkForm {
    Frame(Modality),
    Recurrent(Modality),
    Joint,
}

impl NetworkForm {
    pub fn modality(&self) -> Option<Modality> {
        match self {
            NetworkForm::Frame(m) | NetworkForm::Recurrent(m) => Some(*m),
            NetworkForm::Joint => None,
        }
    }
}

// ── Parameter declarations per form ──────────────────────────────────

/// Networks train from scratch here (no pretrained transfer), so weight
/// scales follow fan-in: a fixed std starves the fifth conv layer of signal
/// entirely at f32. ReLU-facing layers get √(2/fan_in), linear-facing ones
/// √(1/fan_in).
fn fan_in_gaussian(name: String, shape: Vec<usize>, fan_in: usize, relu_gain: bool) -> ParamSpec {
    let gain = if relu_gain { 2.0 } else { 1.0 };
    ParamSpec {
        name,
        shape,
        init: Init::Gaussian {
            std: (gain / fan_in as f64).sqrt(),
        },
    }
}

fn conv_param_specs(arch: &ArchitectureSpec, prefix: &str) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let mut c_in = arch.input_channels;
    for (i, layer) in arch.conv.iter().enumerate() {
        let idx = i + 1;
        specs.push(fan_in_gaussian(
            format!("{prefix}conv{idx}.weight"),
            vec![layer.out_channels, c_in, layer.kernel, layer.kernel],
            c_in * layer.kernel * layer.kernel,
            true,
        ));
        specs.push(ParamSpec::zeros(
            format!("{prefix}conv{idx}.bias"),
            vec![layer.out_channels],
        ));
        c_in = layer.out_channels;
    }
    specs
}

fn dense_param_specs(input: usize, width: usize) -> Vec<ParamSpec> {
    vec![
        fan_in_gaussian("dense.weight".into(), vec![input, width], input, true),
        ParamSpec::zeros("dense.bias", vec![1, width]),
    ]
}

fn head_param_specs(input: usize, gesture: usize, task: usize) -> Vec<ParamSpec> {
    vec![
        fan_in_gaussian(
            "head.gesture.weight".into(),
            vec![input, gesture],
            input,
            false,
        ),
        ParamSpec::zeros("head.gesture.bias", vec![1, gesture]),
        fan_in_gaussian("head.task.weight".into(), vec![input, task], input, false),
        ParamSpec::zeros("head.task.bias", vec![1, task]),
    ]
}

/// Full parameter declaration list of a form. Checkpoint validation and
/// weight transfer both key off this.
pub fn param_specs(arch: &ArchitectureSpec, form: NetworkForm) -> Result<Vec<ParamSpec>> {
    let mut specs = Vec::new();
    match form {
        NetworkForm::Frame(_) => {
            specs.extend(conv_param_specs(arch, ""));
            specs.extend(dense_param_specs(arch.single_feature_len()?, arch.dense_width));
            specs.extend(head_param_specs(
                arch.dense_width,
                arch.gesture_classes,
                arch.task_classes,
            ));
        }
        NetworkForm::Recurrent(_) => {
            specs.extend(conv_param_specs(arch, ""));
            specs.extend(dense_param_specs(arch.single_feature_len()?, arch.dense_width));
            specs.extend(lstm_param_specs("lstm", arch.dense_width, arch.hidden_size));
            specs.extend(head_param_specs(
                arch.hidden_size,
                arch.gesture_classes,
                arch.task_classes,
            ));
        }
        NetworkForm::Joint => {
            specs.extend(conv_param_specs(arch, "rgb."));
            specs.extend(conv_param_specs(arch, "flow."));
            specs.push(ParamSpec::gaussian(
                "fusion.reduce.weight",
                vec![
                    arch.reduction_channels,
                    arch.fusion_in_channels(),
                    arch.reduction_kernel,
                    arch.reduction_kernel,
                ],
            ));
            specs.push(ParamSpec::zeros(
                "fusion.reduce.bias",
                vec![arch.reduction_channels],
            ));
            specs.extend(dense_param_specs(arch.joint_feature_len()?, arch.dense_width));
            specs.extend(lstm_param_specs("lstm", arch.dense_width, arch.hidden_size));
            specs.extend(head_param_specs(
                arch.hidden_size,
                arch.gesture_classes,
                arch.task_classes,
            ));
        }
    }
    Ok(specs)
}

// ── Network ──────────────────────────────────────────────────────────

/// Probability vectors for one frame, one per head. Each is a softmax
/// output and therefore sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction<S: Scalar> {
    pub gesture: Vec<S>,
    pub task: Vec<S>,
}

/// One fixed-length window of paired frames with continuation markers.
/// `markers[0]` must be 0 (clip start resets recurrent state); modalities a
/// form does not consume may be left empty.
#[derive(Debug, Clone)]
pub struct ClipInput<S: Scalar> {
    pub rgb: Vec<Tensor<S>>,
    pub flow: Vec<Tensor<S>>,
    pub markers: Vec<u8>,
}

impl<S: Scalar> ClipInput<S> {
    /// Standard markers for a fresh clip of length `len`: 0 then 1s.
    pub fn fresh_markers(len: usize) -> Vec<u8> {
        (0..len).map(|t| u8::from(t != 0)).collect()
    }
}

/// Per-frame training losses of a clip plus the ids needed to read
/// parameter gradients after `backward`.
pub struct SequenceLoss<S: Scalar> {
    /// Mean over frames of the weighted two-head loss (scalar).
    pub total: TensorId,
    pub mean_gesture_loss: f64,
    pub mean_task_loss: f64,
    pub param_ids: Vec<(String, TensorId)>,
    _marker: std::marker::PhantomData<S>,
}

/// A built network: architecture + form + named parameters. Frozen
/// networks may serve concurrent forward passes; training takes `&mut`.
#[derive(Debug, Clone)]
pub struct Network<S: Scalar> {
    pub arch: ArchitectureSpec,
    pub form: NetworkForm,
    pub params: ParamSet<S>,
}

/// Which tensors a transfer copied and which were freshly initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub copied: Vec<String>,
    pub fresh: Vec<String>,
}

/// Per-frame CNN over one modality: conv body + dense + both heads, no
/// recurrence.
pub fn build_frame_cnn<S: Scalar>(
    arch: &ArchitectureSpec,
    modality: Modality,
    seed: u64,
) -> Result<Network<S>> {
    arch.validate()?;
    let specs = param_specs(arch, NetworkForm::Frame(modality))?;
    Ok(Network {
        arch: arch.clone(),
        form: NetworkForm::Frame(modality),
        params: init_params(&specs, seed),
    })
}

/// Per-modality recurrent net initialized from a frame checkpoint: the conv
/// body and dense projection are copied tensor-for-tensor; the LSTM and both
/// heads are fresh. A shape mismatch on any transferred tensor fails loudly.
pub fn build_modality_lstm<S: Scalar>(
    arch: &ArchitectureSpec,
    modality: Modality,
    frame_checkpoint: &crate::checkpoint::NetworkCheckpoint<S>,
    seed: u64,
) -> Result<(Network<S>, TransferReport)> {
    arch.validate()?;
    let expected = StageTag::frame(modality);
    if frame_checkpoint.stage != expected {
        return Err(CoreError::StageMismatch {
            expected: expected.to_string(),
            found: frame_checkpoint.stage.to_string(),
        });
    }
    let specs = param_specs(arch, NetworkForm::Recurrent(modality))?;
    let mut params: ParamSet<S> = init_params(&specs, seed);
    let transferable: Vec<String> = specs
        .iter()
        .map(|s| s.name.clone())
        .filter(|n| n.starts_with("conv") || n.starts_with("dense."))
        .collect();
    let report = transfer(&mut params, &frame_checkpoint.params, &transferable, |n| {
        n.to_string()
    })?;
    Ok((
        Network {
            arch: arch.clone(),
            form: NetworkForm::Recurrent(modality),
            params,
        },
        report,
    ))
}

/// Joint two-stream net: stream conv bodies come from the two recurrent
/// checkpoints (`rgb.*` ← lstm-rgb, `flow.*` ← lstm-flow). The fusion
/// reduction conv, dense projection, LSTM and heads have no single-stream
/// counterpart and are freshly initialized from `seed`.
pub fn build_joint_model<S: Scalar>(
    arch: &ArchitectureSpec,
    rgb_checkpoint: &crate::checkpoint::NetworkCheckpoint<S>,
    flow_checkpoint: &crate::checkpoint::NetworkCheckpoint<S>,
    seed: u64,
) -> Result<(Network<S>, TransferReport)> {
    arch.validate()?;
    for (ckpt, expected) in [
        (rgb_checkpoint, StageTag::LstmRgb),
        (flow_checkpoint, StageTag::LstmFlow),
    ] {
        if ckpt.stage != expected {
            return Err(CoreError::StageMismatch {
                expected: expected.to_string(),
                found: ckpt.stage.to_string(),
            });
        }
    }
    let specs = param_specs(arch, NetworkForm::Joint)?;
    let mut params: ParamSet<S> = init_params(&specs, seed);
    let rgb_names: Vec<String> = specs
        .iter()
        .map(|s| s.name.clone())
        .filter(|n| n.starts_with("rgb.conv"))
        .collect();
    let flow_names: Vec<String> = specs
        .iter()
        .map(|s| s.name.clone())
        .filter(|n| n.starts_with("flow.conv"))
        .collect();
    let mut report = transfer(&mut params, &rgb_checkpoint.params, &rgb_names, |n| {
        n.trim_start_matches("rgb.").to_string()
    })?;
    let flow_report = transfer(&mut params, &flow_checkpoint.params, &flow_names, |n| {
        n.trim_start_matches("flow.").to_string()
    })?;
    report.copied.extend(flow_report.copied);
    report.fresh.retain(|n| !report.copied.contains(n));
    report.copied.sort();
    report.fresh.sort();
    Ok((
        Network {
            arch: arch.clone(),
            form: NetworkForm::Joint,
            params,
        },
        report,
    ))
}

fn transfer<S: Scalar>(
    dst: &mut ParamSet<S>,
    src: &ParamSet<S>,
    names: &[String],
    src_name_of: impl Fn(&str) -> String,
) -> Result<TransferReport> {
    let mut copied = Vec::new();
    for name in names {
        let source = src.get(&src_name_of(name))?;
        let target = dst.get_mut(name)?;
        if source.shape != target.shape {
            return Err(CoreError::ParamShapeMismatch {
                name: name.clone(),
                expected: target.shape.clone(),
                found: source.shape.clone(),
            });
        }
        target.data.clone_from(&source.data);
        copied.push(name.clone());
    }
    let fresh = dst
        .names()
        .into_iter()
        .filter(|n| !copied.contains(n))
        .collect();
    copied.sort();
    Ok(TransferReport { copied, fresh })
}

// ── Forward passes ───────────────────────────────────────────────────

struct TapeParams {
    ids: Vec<(String, TensorId)>,
}

impl TapeParams {
    fn get(&self, name: &str) -> Result<TensorId> {
        self.ids
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .ok_or_else(|| CoreError::MissingParam {
                name: name.to_string(),
            })
    }
}

fn insert_params<S: Scalar>(
    tape: &mut Tape<S>,
    params: &ParamSet<S>,
    requires_grad: bool,
) -> Result<TapeParams> {
    let mut ids = Vec::with_capacity(params.len());
    for (name, tensor) in params.iter() {
        let id = tape.leaf(tensor.clone(), requires_grad)?;
        ids.push((name.clone(), id));
    }
    Ok(TapeParams { ids })
}

fn lstm_ids(p: &TapeParams) -> Result<LstmParamIds> {
    Ok(LstmParamIds {
        w_i: p.get("lstm.w_i")?,
        w_f: p.get("lstm.w_f")?,
        w_g: p.get("lstm.w_g")?,
        w_o: p.get("lstm.w_o")?,
        b_i: p.get("lstm.b_i")?,
        b_f: p.get("lstm.b_f")?,
        b_g: p.get("lstm.b_g")?,
        b_o: p.get("lstm.b_o")?,
    })
}

/// conv1..conv5 with ReLU and interleaved pools; returns conv5 activations
/// (pre final pool).
fn conv_body<S: Scalar>(
    tape: &mut Tape<S>,
    p: &TapeParams,
    prefix: &str,
    arch: &ArchitectureSpec,
    input: TensorId,
) -> Result<TensorId> {
    let mut x = input;
    for (i, layer) in arch.conv.iter().enumerate() {
        let idx = i + 1;
        let w = p.get(&format!("{prefix}conv{idx}.weight"))?;
        let b = p.get(&format!("{prefix}conv{idx}.bias"))?;
        x = tape.conv2d(x, w, b, layer.stride, layer.pad)?;
        x = tape.relu(x)?;
        if let Some(pool) = &layer.pool {
            x = tape.max_pool2d(x, pool.k, pool.k, pool.stride)?;
        }
    }
    Ok(x)
}

fn pool_flatten_dense<S: Scalar>(
    tape: &mut Tape<S>,
    p: &TapeParams,
    arch: &ArchitectureSpec,
    x: TensorId,
) -> Result<TensorId> {
    let pooled = tape.max_pool2d(x, arch.final_pool.k, arch.final_pool.k, arch.final_pool.stride)?;
    let n = tape.value(pooled).numel();
    let flat = tape.reshape(pooled, vec![1, n])?;
    let w = p.get("dense.weight")?;
    let b = p.get("dense.bias")?;
    let projected = dense(tape, flat, w, b)?;
    tape.relu(projected)
}

fn head_logits<S: Scalar>(
    tape: &mut Tape<S>,
    p: &TapeParams,
    features: TensorId,
) -> Result<(TensorId, TensorId)> {
    let gw = p.get("head.gesture.weight")?;
    let gb = p.get("head.gesture.bias")?;
    let tw = p.get("head.task.weight")?;
    let tb = p.get("head.task.bias")?;
    Ok((
        dense(tape, features, gw, gb)?,
        dense(tape, features, tw, tb)?,
    ))
}

impl<S: Scalar> Network<S> {
    fn modality_frames<'a>(&self, clip: &'a ClipInput<S>, m: Modality) -> &'a [Tensor<S>] {
        match m {
            Modality::Rgb => &clip.rgb,
            Modality::Flow => &clip.flow,
        }
    }

    fn validate_clip(&self, clip: &ClipInput<S>) -> Result<()> {
        let len = clip.markers.len();
        if len == 0 {
            return Err(CoreError::InvalidArgument {
                op: "forward_sequence",
                msg: "empty clip".into(),
            });
        }
        if clip.markers[0] != 0 {
            return Err(CoreError::InvalidArgument {
                op: "forward_sequence",
                msg: "first clip marker must be 0".into(),
            });
        }
        let need = |frames: &[Tensor<S>], what: &str| -> Result<()> {
            if frames.len() != len {
                return Err(CoreError::InvalidArgument {
                    op: "forward_sequence",
                    msg: format!("{what} frame count {} != marker count {len}", frames.len()),
                });
            }
            Ok(())
        };
        match self.form {
            NetworkForm::Frame(m) | NetworkForm::Recurrent(m) => {
                need(self.modality_frames(clip, m), "modality")?
            }
            NetworkForm::Joint => {
                need(&clip.rgb, "rgb")?;
                need(&clip.flow, "flow")?;
            }
        }
        Ok(())
    }

    /// Per-frame feature vector ids for one clip, threading recurrent state
    /// where the form has it.
    fn frame_features(
        &self,
        tape: &mut Tape<S>,
        p: &TapeParams,
        clip: &ClipInput<S>,
    ) -> Result<Vec<TensorId>> {
        let len = clip.markers.len();
        let mut features = Vec::with_capacity(len);
        match self.form {
            NetworkForm::Frame(m) => {
                for t in 0..len {
                    let input =
                        tape.leaf(self.modality_frames(clip, m)[t].clone(), false)?;
                    let body = conv_body(tape, p, "", &self.arch, input)?;
                    features.push(pool_flatten_dense(tape, p, &self.arch, body)?);
                }
            }
            NetworkForm::Recurrent(m) => {
                let lstm = lstm_ids(p)?;
                let mut state = lstm_zero_state(tape, self.arch.hidden_size)?;
                for t in 0..len {
                    let input =
                        tape.leaf(self.modality_frames(clip, m)[t].clone(), false)?;
                    let body = conv_body(tape, p, "", &self.arch, input)?;
                    let feat = pool_flatten_dense(tape, p, &self.arch, body)?;
                    let (y, next) = lstm_step(tape, feat, &state, &lstm, clip.markers[t])?;
                    state = next;
                    features.push(y);
                }
            }
            NetworkForm::Joint => {
                let lstm = lstm_ids(p)?;
                let rw = p.get("fusion.reduce.weight")?;
                let rb = p.get("fusion.reduce.bias")?;
                let rk = self.arch.reduction_kernel;
                let mut state = lstm_zero_state(tape, self.arch.hidden_size)?;
                for t in 0..len {
                    let rgb = tape.leaf(clip.rgb[t].clone(), false)?;
                    let flow = tape.leaf(clip.flow[t].clone(), false)?;
                    let rgb5 = conv_body(tape, p, "rgb.", &self.arch, rgb)?;
                    let flow5 = conv_body(tape, p, "flow.", &self.arch, flow)?;
                    let fused = tape.concat_channels(rgb5, flow5)?;
                    let reduced = tape.conv2d(fused, rw, rb, 1, rk / 2)?;
                    let reduced = tape.relu(reduced)?;
                    let feat = pool_flatten_dense(tape, p, &self.arch, reduced)?;
                    let (y, next) = lstm_step(tape, feat, &state, &lstm, clip.markers[t])?;
                    state = next;
                    features.push(y);
                }
            }
        }
        Ok(features)
    }

    /// Inference over one clip: one [`FramePrediction`] per frame. Step `t`
    /// sees frames `≤ t` only.
    pub fn forward_sequence(&self, clip: &ClipInput<S>) -> Result<Vec<FramePrediction<S>>> {
        self.validate_clip(clip)?;
        let mut tape = Tape::new();
        let p = insert_params(&mut tape, &self.params, false)?;
        let features = self.frame_features(&mut tape, &p, clip)?;
        let mut out = Vec::with_capacity(features.len());
        for feat in features {
            let (g_logits, t_logits) = head_logits(&mut tape, &p, feat)?;
            let g = tape.softmax(g_logits)?;
            let t = tape.softmax(t_logits)?;
            out.push(FramePrediction {
                gesture: tape.value(g).data.clone(),
                task: tape.value(t).data.clone(),
            });
        }
        Ok(out)
    }

    /// Training graph for one clip: the mean over frames of the weighted
    /// two-head loss. Call `tape.backward(loss.total)` and read parameter
    /// gradients through `loss.param_ids`.
    pub fn sequence_loss(
        &self,
        tape: &mut Tape<S>,
        clip: &ClipInput<S>,
        gesture_target: usize,
        task_target: usize,
        weights: (f64, f64),
    ) -> Result<SequenceLoss<S>> {
        let p = insert_params(tape, &self.params, true)?;
        self.sequence_loss_with_params(tape, p.ids, clip, gesture_target, task_target, weights)
    }

    /// [`Network::sequence_loss`] over caller-supplied parameter leaves
    /// (`name → id`), so the whole forward-plus-loss can be treated as a
    /// function of its parameters by the gradient checker.
    pub fn sequence_loss_with_params(
        &self,
        tape: &mut Tape<S>,
        param_ids: Vec<(String, TensorId)>,
        clip: &ClipInput<S>,
        gesture_target: usize,
        task_target: usize,
        weights: (f64, f64),
    ) -> Result<SequenceLoss<S>> {
        self.validate_clip(clip)?;
        let p = TapeParams { ids: param_ids };
        let features = self.frame_features(tape, &p, clip)?;
        let len = features.len();
        let mut total: Option<TensorId> = None;
        let mut gesture_sum = 0.0;
        let mut task_sum = 0.0;
        for feat in features {
            let (g_logits, t_logits) = head_logits(tape, &p, feat)?;
            let MultiTaskLoss {
                total: frame_loss,
                gesture_loss,
                task_loss,
                ..
            } = multi_task_loss(tape, g_logits, t_logits, gesture_target, task_target, weights)?;
            gesture_sum += tape.value(gesture_loss).data[0].as_f64();
            task_sum += tape.value(task_loss).data[0].as_f64();
            total = Some(match total {
                None => frame_loss,
                Some(acc) => tape.add(acc, frame_loss)?,
            });
        }
        let total = tape.scale(total.expect("non-empty clip"), S::of_f64(1.0 / len as f64))?;
        Ok(SequenceLoss {
            total,
            mean_gesture_loss: gesture_sum / len as f64,
            mean_task_loss: task_sum / len as f64,
            param_ids: p.ids,
            _marker: std::marker::PhantomData,
        })
    }

    /// Conv5 activations of one stream for a single frame. `stream` selects
    /// the joint form's stream; single-stream forms ignore it.
    pub fn conv_body_activations(
        &self,
        frame: &Tensor<S>,
        stream: Option<Modality>,
    ) -> Result<Tensor<S>> {
        let prefix = match (self.form, stream) {
            (NetworkForm::Joint, Some(Modality::Rgb)) => "rgb.",
            (NetworkForm::Joint, Some(Modality::Flow)) => "flow.",
            (NetworkForm::Joint, None) => {
                return Err(CoreError::InvalidArgument {
                    op: "conv_body_activations",
                    msg: "joint form requires a stream".into(),
                })
            }
            _ => "",
        };
        let mut tape = Tape::new();
        let p = insert_params(&mut tape, &self.params, false)?;
        let input = tape.leaf(frame.clone(), false)?;
        let out = conv_body(&mut tape, &p, prefix, &self.arch, input)?;
        Ok(tape.value(out).clone())
    }
}
