//! Clip-based inference with two-level prediction averaging: per-frame
//! probabilities are averaged within each clip, and clip means are averaged
//! into the segment-level vector the metrics consume.

use gestnet_core::network::{FramePrediction, Network};
use gestnet_core::Scalar;
use gestnet_data::VideoSegment;
use rayon::prelude::*;

use crate::clips::extract_clips;
use crate::config::RunConfig;
use crate::error::Result;

/// Per-frame probabilities for one clip, as (gesture, task) pairs in f64.
pub type ClipFrames = Vec<(Vec<f64>, Vec<f64>)>;

/// Output of [`aggregate_clips`]: per-clip frame predictions (sorted by
/// start), per-clip means, and the segment-level gesture/task vectors.
pub type Aggregated = (Vec<ClipFrames>, Vec<(Vec<f64>, Vec<f64>)>, Vec<f64>, Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPrediction {
    pub segment_id: String,
    /// Per-clip per-frame probabilities, ordered by clip start offset.
    pub per_frame: Vec<ClipFrames>,
    /// One (gesture, task) mean per clip.
    pub clip_means: Vec<(Vec<f64>, Vec<f64>)>,
    /// Mean of clip means.
    pub gesture_probs: Vec<f64>,
    pub task_probs: Vec<f64>,
    pub gesture_argmax: usize,
    pub task_argmax: usize,
}

/// Lowest index wins ties, so evaluation is deterministic.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

fn mean_rows(rows: &[&[f64]]) -> Vec<f64> {
    let width = rows[0].len();
    let mut out = vec![0.0; width];
    for row in rows {
        for (o, &v) in out.iter_mut().zip(row.iter()) {
            *o += v;
        }
    }
    let n = rows.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// The frame → clip → segment averaging, as a pure function of per-clip
/// frame predictions keyed by clip start. Input order does not matter:
/// clips are re-sorted by start offset before any floating-point reduction,
/// so permuting clip processing order reproduces the result bit for bit.
pub fn aggregate_clips(mut clips: Vec<(usize, ClipFrames)>) -> Aggregated {
    assert!(!clips.is_empty(), "at least one clip required");
    clips.sort_by_key(|(start, _)| *start);
    let per_frame: Vec<ClipFrames> = clips.into_iter().map(|(_, frames)| frames).collect();
    let clip_means: Vec<(Vec<f64>, Vec<f64>)> = per_frame
        .iter()
        .map(|frames| {
            let gestures: Vec<&[f64]> = frames.iter().map(|(g, _)| g.as_slice()).collect();
            let tasks: Vec<&[f64]> = frames.iter().map(|(_, t)| t.as_slice()).collect();
            (mean_rows(&gestures), mean_rows(&tasks))
        })
        .collect();
    let gesture_rows: Vec<&[f64]> = clip_means.iter().map(|(g, _)| g.as_slice()).collect();
    let task_rows: Vec<&[f64]> = clip_means.iter().map(|(_, t)| t.as_slice()).collect();
    let gesture = mean_rows(&gesture_rows);
    let task = mean_rows(&task_rows);
    (per_frame, clip_means, gesture, task)
}

fn to_f64_frames<S: Scalar>(preds: Vec<FramePrediction<S>>) -> ClipFrames {
    preds
        .into_iter()
        .map(|p| {
            (
                p.gesture.iter().map(|x| x.as_f64()).collect(),
                p.task.iter().map(|x| x.as_f64()).collect(),
            )
        })
        .collect()
}

/// Forward every strided clip of a segment and average frame → clip →
/// segment. Clips evaluate in parallel; the aggregation is order-canonical.
pub fn predict_segment<S: Scalar>(
    network: &Network<S>,
    segment: &VideoSegment,
    config: &RunConfig,
) -> Result<SegmentPrediction> {
    let clips = extract_clips(segment, config.clip_len, config.clip_stride)?;
    let evaluated: Vec<Result<(usize, ClipFrames)>> = clips
        .par_iter()
        .map(|clip| {
            let input =
                crate::clips::tensorize_for::<S>(clip, config, None, network.form.modality())?;
            let preds = network.forward_sequence(&input)?;
            Ok((clip.start, to_f64_frames(preds)))
        })
        .collect();
    let mut keyed = Vec::with_capacity(evaluated.len());
    for item in evaluated {
        keyed.push(item?);
    }
    let (per_frame, clip_means, gesture_probs, task_probs) = aggregate_clips(keyed);
    Ok(SegmentPrediction {
        segment_id: segment.id.clone(),
        per_frame,
        clip_means,
        gesture_argmax: argmax(&gesture_probs),
        task_argmax: argmax(&task_probs),
        gesture_probs,
        task_probs,
    })
}
