//! The staged training protocol: per-frame CNNs, per-modality recurrent
//! nets initialized from them, then the joint two-stream net initialized
//! from both. Each stage is a minibatch SGD loop honoring the step
//! schedule, weight decay, and (recurrent stages only) global-norm
//! gradient clipping.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use gestnet_core::checkpoint::NetworkCheckpoint;
use gestnet_core::network::{
    build_frame_cnn, build_joint_model, build_modality_lstm, Modality, Network, StageTag,
};
use gestnet_core::optim::{clip_gradients, sgd_step, GradMap};
use gestnet_core::{fnv1a64, Scalar, Tape};
use gestnet_data::VideoSegment;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::clips::{tensorize_for, window};
use crate::config::RunConfig;
use crate::error::{Result, TrainError};

/// One row of the loss trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_gesture: f64,
    pub loss_task: f64,
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = fs::File::create(path)?;
    writeln!(out, "iteration,lr,loss_total,loss_gesture,loss_task")?;
    for row in trace {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.iteration, row.lr, row.loss_total, row.loss_gesture, row.loss_task
        )?;
    }
    Ok(())
}

/// Stage-appropriate initialization.
pub enum StageInit<'a, S: Scalar> {
    /// Frame stages start from seeded random weights.
    Seed,
    /// Recurrent stages transfer conv + dense from a frame checkpoint.
    Frame(&'a NetworkCheckpoint<S>),
    /// The joint stage transfers both stream bodies.
    Both {
        rgb: &'a NetworkCheckpoint<S>,
        flow: &'a NetworkCheckpoint<S>,
    },
}

#[derive(Debug)]
pub struct TrainOutcome<S: Scalar> {
    pub checkpoint: NetworkCheckpoint<S>,
    pub trace: Vec<TraceRow>,
}

fn stage_seed(config_seed: u64, stage: StageTag, salt: &str) -> u64 {
    let mut key = Vec::new();
    key.extend_from_slice(&config_seed.to_le_bytes());
    key.extend_from_slice(stage.to_string().as_bytes());
    key.extend_from_slice(salt.as_bytes());
    fnv1a64(&key)
}

fn build_stage_network<S: Scalar>(
    stage: StageTag,
    config: &RunConfig,
    init: StageInit<'_, S>,
) -> Result<Network<S>> {
    let arch = &config.architecture;
    let seed = stage_seed(config.seed, stage, "init");
    match (stage, init) {
        (StageTag::FrameRgb, StageInit::Seed) => Ok(build_frame_cnn(arch, Modality::Rgb, seed)?),
        (StageTag::FrameFlow, StageInit::Seed) => Ok(build_frame_cnn(arch, Modality::Flow, seed)?),
        (StageTag::LstmRgb, StageInit::Frame(ckpt)) => {
            Ok(build_modality_lstm(arch, Modality::Rgb, ckpt, seed)?.0)
        }
        (StageTag::LstmFlow, StageInit::Frame(ckpt)) => {
            Ok(build_modality_lstm(arch, Modality::Flow, ckpt, seed)?.0)
        }
        (StageTag::Joint, StageInit::Both { rgb, flow }) => {
            Ok(build_joint_model(arch, rgb, flow, seed)?.0)
        }
        (stage, _) => Err(TrainError::MissingInit {
            stage: stage.to_string(),
            what: match stage {
                StageTag::FrameRgb | StageTag::FrameFlow => "a seed (no checkpoint)".into(),
                StageTag::LstmRgb | StageTag::LstmFlow => {
                    "the matching frame checkpoint".into()
                }
                StageTag::Joint => "both modality recurrent checkpoints".into(),
            },
        }),
    }
}

fn is_recurrent(stage: StageTag) -> bool {
    matches!(stage, StageTag::LstmRgb | StageTag::LstmFlow | StageTag::Joint)
}

/// Train one stage to its configured iteration budget.
///
/// Sampling is epoch-based: segments are reshuffled each pass; frame stages
/// draw one random frame per segment, recurrent stages one random
/// fixed-length window. Per-sample losses and gradients are computed on
/// independent tapes (in parallel), then reduced in batch order so the run
/// is bit-reproducible regardless of thread count.
///
/// `loss_weights` scales the (gesture, task) heads; `(1, 1)` is the
/// standard equal weighting, and a zero entry trains single-task.
pub fn train_stage<S: Scalar>(
    stage: StageTag,
    data: &[VideoSegment],
    config: &RunConfig,
    init: StageInit<'_, S>,
    loss_weights: (f64, f64),
    out_dir: Option<&Path>,
) -> Result<TrainOutcome<S>> {
    config.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let recurrent = is_recurrent(stage);
    if recurrent {
        for segment in data {
            if segment.len() < config.clip_len {
                return Err(TrainError::SegmentTooShort {
                    id: segment.id.clone(),
                    len: segment.len(),
                    need: config.clip_len,
                });
            }
        }
    }

    let mut network = build_stage_network(stage, config, init)?;
    let mut opt = config.optimizer();
    let max_iters = config.max_iters_for(stage);
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(config.seed, stage, "sampler"));
    let mut trace = Vec::with_capacity(max_iters as usize);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len(); // force an initial shuffle

    let mut iteration: u64 = 0;
    while iteration < max_iters {
        // Assemble one batch of (segment, window start, augment seed).
        let mut batch = Vec::with_capacity(config.batch);
        while batch.len() < config.batch {
            if cursor >= order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let segment = &data[order[cursor]];
            cursor += 1;
            let clip_len = if recurrent { config.clip_len } else { 1 };
            if segment.len() < clip_len {
                continue; // frame stages tolerate short segments; recurrent checked above
            }
            let start = rng.random_range(0..=segment.len() - clip_len);
            let augment_seed: u64 = rng.random();
            batch.push((order[cursor - 1], start, clip_len, augment_seed));
        }

        // Per-sample forward/backward on independent tapes.
        type SampleResult<S> = (GradMap<S>, f64, f64, f64);
        let results: Vec<Result<SampleResult<S>>> = batch
            .par_iter()
            .map(|&(seg_idx, start, clip_len, augment_seed)| {
                let segment = &data[seg_idx];
                let clip = window(segment, start, clip_len);
                let input =
                    tensorize_for::<S>(&clip, config, Some(augment_seed), network.form.modality())?;
                let mut tape = Tape::new();
                let loss = network.sequence_loss(
                    &mut tape,
                    &input,
                    segment.gesture as usize,
                    segment.task as usize,
                    loss_weights,
                )?;
                let total = tape.value(loss.total).data[0].as_f64();
                tape.backward(loss.total)?;
                let mut grads = GradMap::new();
                for (name, id) in &loss.param_ids {
                    let grad = tape
                        .grad(*id)
                        .ok_or_else(|| gestnet_core::CoreError::MissingGrad {
                            name: name.clone(),
                        })?
                        .to_vec();
                    grads.insert(name.clone(), grad);
                }
                Ok((grads, total, loss.mean_gesture_loss, loss.mean_task_loss))
            })
            .collect();

        // Ordered reduction: sum in batch order, then average.
        let mut summed: Option<GradMap<S>> = None;
        let mut loss_total = 0.0;
        let mut loss_gesture = 0.0;
        let mut loss_task = 0.0;
        for result in results {
            let (grads, total, gesture, task) = result.map_err(|e| annotate(e, stage, iteration))?;
            loss_total += total;
            loss_gesture += gesture;
            loss_task += task;
            summed = Some(match summed {
                None => grads,
                Some(mut acc) => {
                    for (name, grad) in grads {
                        let slot = acc.get_mut(&name).expect("aligned grad maps");
                        for (a, g) in slot.iter_mut().zip(grad) {
                            *a += g;
                        }
                    }
                    acc
                }
            });
        }
        let mut grads = summed.expect("non-empty batch");
        let scale = S::of_f64(1.0 / batch.len() as f64);
        for grad in grads.values_mut() {
            for g in grad.iter_mut() {
                *g *= scale;
            }
        }

        // Gradient clipping is scoped to the recurrent stages.
        if recurrent {
            clip_gradients(&mut grads, config.clip_threshold);
        }

        let lr = opt.lr_schedule(opt.iteration);
        sgd_step(&mut network.params, &grads, &mut opt)?;

        let n = batch.len() as f64;
        trace.push(TraceRow {
            iteration,
            lr,
            loss_total: loss_total / n,
            loss_gesture: loss_gesture / n,
            loss_task: loss_task / n,
        });

        iteration += 1;
        if let Some(dir) = out_dir {
            if iteration.is_multiple_of(config.checkpoint_interval) && iteration < max_iters {
                let ckpt =
                    NetworkCheckpoint::from_network(&network, stage, opt.iteration, opt.clone())?;
                ckpt.save(&dir.join(format!("{stage}_iter{iteration:07}.ckpt")))?;
            }
        }
    }

    let checkpoint = NetworkCheckpoint::from_network(&network, stage, opt.iteration, opt)?;
    if let Some(dir) = out_dir {
        checkpoint.save(&dir.join(format!("{stage}.ckpt")))?;
        write_trace_csv(&dir.join(format!("{stage}_trace.csv")), &trace)?;
    }
    Ok(TrainOutcome { checkpoint, trace })
}

fn annotate(err: TrainError, stage: StageTag, iteration: u64) -> TrainError {
    match err {
        TrainError::Core(core) if matches!(core, gestnet_core::CoreError::NonFinite { .. }) => {
            TrainError::NonFiniteLoss {
                stage: stage.to_string(),
                iteration,
                source: core,
            }
        }
        other => other,
    }
}

/// All five checkpoints of a full staged run, with per-stage loss traces.
pub struct PipelineCheckpoints<S: Scalar> {
    pub frame_rgb: NetworkCheckpoint<S>,
    pub frame_flow: NetworkCheckpoint<S>,
    pub lstm_rgb: NetworkCheckpoint<S>,
    pub lstm_flow: NetworkCheckpoint<S>,
    pub joint: NetworkCheckpoint<S>,
    pub traces: Vec<(StageTag, Vec<TraceRow>)>,
}

/// Run the whole staged protocol (frame → per-modality recurrent → joint)
/// with equal head weights.
pub fn train_full_pipeline<S: Scalar>(
    data: &[VideoSegment],
    config: &RunConfig,
    out_dir: Option<&Path>,
) -> Result<PipelineCheckpoints<S>> {
    let mut traces = Vec::with_capacity(5);
    let mut run = |stage: StageTag, init: StageInit<'_, S>| -> Result<NetworkCheckpoint<S>> {
        let outcome = train_stage::<S>(stage, data, config, init, (1.0, 1.0), out_dir)?;
        traces.push((stage, outcome.trace));
        Ok(outcome.checkpoint)
    };
    let frame_rgb = run(StageTag::FrameRgb, StageInit::Seed)?;
    let frame_flow = run(StageTag::FrameFlow, StageInit::Seed)?;
    let lstm_rgb = run(StageTag::LstmRgb, StageInit::Frame(&frame_rgb))?;
    let lstm_flow = run(StageTag::LstmFlow, StageInit::Frame(&frame_flow))?;
    let joint = run(
        StageTag::Joint,
        StageInit::Both {
            rgb: &lstm_rgb,
            flow: &lstm_flow,
        },
    )?;
    Ok(PipelineCheckpoints {
        frame_rgb,
        frame_flow,
        lstm_rgb,
        lstm_flow,
        joint,
        traces,
    })
}
