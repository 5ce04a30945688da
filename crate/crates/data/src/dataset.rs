//! Labeled gesture segments and the on-disk dataset layouts.
//!
//! Raw layout (ingest): `root/<task>/<trial>/frames/frame_NNNNNN.png` plus
//! `root/<task>/<trial>/transcript.txt`.
//! Processed archive:   `root/processed/<segment_id>/{rgb,flow}/frame_NNNNNN.png`
//! plus `labels.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::flow::{compute_flow, encode_flow_rgb, HornSchunckParams};
use crate::image::ImageU8;
use crate::transcript::{
    gesture_class, gesture_raw_label, parse_transcript, sample_frame_indices, task_index,
    TASK_NAMES,
};

/// One gesture clip: paired RGB and flow-RGB frames with both labels.
#[derive(Debug, Clone)]
pub struct VideoSegment {
    pub id: String,
    /// Gesture class, 0..13.
    pub gesture: u8,
    /// Task class, 0..2.
    pub task: u8,
    pub frames_rgb: Vec<ImageU8>,
    pub frames_flow: Vec<ImageU8>,
}

impl VideoSegment {
    pub fn len(&self) -> usize {
        self.frames_rgb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames_rgb.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames_rgb.is_empty() || self.frames_rgb.len() != self.frames_flow.len() {
            return Err(DataError::Segment {
                id: self.id.clone(),
                msg: format!(
                    "rgb/flow lengths {} vs {} (must be equal, ≥ 1)",
                    self.frames_rgb.len(),
                    self.frames_flow.len()
                ),
            });
        }
        if self.gesture > 13 || self.task > 2 {
            return Err(DataError::Segment {
                id: self.id.clone(),
                msg: format!("labels out of range: gesture {}, task {}", self.gesture, self.task),
            });
        }
        Ok(())
    }
}

/// `labels.json` alongside each processed segment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SegmentLabels {
    pub gesture: u8,
    pub gesture_raw: String,
    pub task: u8,
    pub task_name: String,
    pub source: String,
    pub start_time: f64,
    pub end_time: f64,
}

fn frame_name(i: usize) -> String {
    format!("frame_{i:06}.png")
}

pub fn segment_dir(root: &Path, id: &str) -> PathBuf {
    root.join("processed").join(id)
}

/// Write a segment under `root/processed/<id>/`.
pub fn save_segment(root: &Path, segment: &VideoSegment, labels: &SegmentLabels) -> Result<()> {
    segment.validate()?;
    let dir = segment_dir(root, &segment.id);
    for (sub, frames) in [("rgb", &segment.frames_rgb), ("flow", &segment.frames_flow)] {
        let sub_dir = dir.join(sub);
        fs::create_dir_all(&sub_dir)?;
        for (i, frame) in frames.iter().enumerate() {
            frame.save_png(&sub_dir.join(frame_name(i)))?;
        }
    }
    let json = serde_json::to_vec_pretty(labels)?;
    fs::write(dir.join("labels.json"), json)?;
    Ok(())
}

fn load_frame_dir(dir: &Path) -> Result<Vec<ImageU8>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    names.sort();
    names.iter().map(|p| ImageU8::load_png(p)).collect()
}

pub fn load_segment(root: &Path, id: &str) -> Result<(VideoSegment, SegmentLabels)> {
    let dir = segment_dir(root, id);
    let labels: SegmentLabels = serde_json::from_slice(&fs::read(dir.join("labels.json"))?)?;
    let segment = VideoSegment {
        id: id.to_string(),
        gesture: labels.gesture,
        task: labels.task,
        frames_rgb: load_frame_dir(&dir.join("rgb"))?,
        frames_flow: load_frame_dir(&dir.join("flow"))?,
    };
    segment.validate()?;
    Ok((segment, labels))
}

/// Segment ids present under `root/processed/`, sorted.
pub fn list_segment_ids(root: &Path) -> Result<Vec<String>> {
    let processed = root.join("processed");
    if !processed.exists() {
        return Ok(Vec::new());
    }
    let mut ids: Vec<String> = fs::read_dir(processed)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    Ok(ids)
}

/// What [`preprocess_raw`] did.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PreprocessSummary {
    pub segments_written: usize,
    /// Segments dropped for having fewer sampled frames than `min_frames`.
    pub segments_dropped_short: usize,
}

/// Ingest the raw layout: clip each trial's video into gesture segments via
/// its transcript, sample frames at `extraction_fps`, resize to
/// `(extract_h, extract_w)`, and write RGB frames to the processed archive
/// (flow is a separate pass, see [`compute_missing_flow`]). Segments whose
/// sampled length falls below `min_frames` are dropped and counted.
#[allow(clippy::too_many_arguments)]
pub fn preprocess_raw(
    raw_root: &Path,
    out_root: &Path,
    source_fps: f64,
    extraction_fps: f64,
    extract_h: usize,
    extract_w: usize,
    min_frames: usize,
) -> Result<PreprocessSummary> {
    let mut summary = PreprocessSummary::default();
    for task_name in TASK_NAMES {
        let task_dir = raw_root.join(task_name);
        if !task_dir.exists() {
            continue;
        }
        let task = task_index(task_name)?;
        let mut trials: Vec<PathBuf> = fs::read_dir(&task_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        trials.sort();
        for trial in trials {
            let trial_name = trial
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let transcript = fs::read_to_string(trial.join("transcript.txt"))?;
            let entries = parse_transcript(&transcript, source_fps)?;
            let frames = load_frame_dir(&trial.join("frames"))?;
            for (k, entry) in entries.iter().enumerate() {
                let gesture = gesture_class(&entry.gesture_raw)?;
                let indices = sample_frame_indices(
                    entry.start_time,
                    entry.end_time,
                    extraction_fps,
                    source_fps,
                    frames.len(),
                )?;
                if indices.len() < min_frames {
                    summary.segments_dropped_short += 1;
                    continue;
                }
                let id = format!("{task_name}_{trial_name}_{k:03}");
                let rgb: Vec<ImageU8> = indices
                    .iter()
                    .map(|&i| frames[i].resize(extract_h, extract_w))
                    .collect::<Result<_>>()?;
                let dir = segment_dir(out_root, &id).join("rgb");
                fs::create_dir_all(&dir)?;
                for (i, frame) in rgb.iter().enumerate() {
                    frame.save_png(&dir.join(frame_name(i)))?;
                }
                let labels = SegmentLabels {
                    gesture,
                    gesture_raw: entry.gesture_raw.clone(),
                    task,
                    task_name: task_name.to_string(),
                    source: format!("{task_name}/{trial_name}"),
                    start_time: entry.start_time,
                    end_time: entry.end_time,
                };
                fs::write(
                    segment_dir(out_root, &id).join("labels.json"),
                    serde_json::to_vec_pretty(&labels)?,
                )?;
                summary.segments_written += 1;
            }
        }
    }
    Ok(summary)
}

/// Fill in `flow/` for every processed segment that lacks it: flow between
/// consecutive sampled frames, encoded to RGB. The final frame reuses the
/// previous interval's flow so modalities stay the same length.
pub fn compute_missing_flow(
    root: &Path,
    params: &HornSchunckParams,
    clip_mag: f64,
) -> Result<usize> {
    use rayon::prelude::*;
    let ids = list_segment_ids(root)?;
    let todo: Vec<String> = ids
        .into_iter()
        .filter(|id| !segment_dir(root, id).join("flow").exists())
        .collect();
    let results: Vec<Result<()>> = todo
        .par_iter()
        .map(|id| {
            let dir = segment_dir(root, id);
            let rgb = load_frame_dir(&dir.join("rgb"))?;
            let flow_imgs = flow_frames_for(&rgb, params, clip_mag)?;
            let flow_dir = dir.join("flow");
            fs::create_dir_all(&flow_dir)?;
            for (i, frame) in flow_imgs.iter().enumerate() {
                frame.save_png(&flow_dir.join(frame_name(i)))?;
            }
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    Ok(todo.len())
}

/// Flow-RGB frames paired 1:1 with `frames`: index t holds flow t → t+1;
/// the last index repeats the previous one (single-frame input gets a
/// zero-flow image).
pub fn flow_frames_for(
    frames: &[ImageU8],
    params: &HornSchunckParams,
    clip_mag: f64,
) -> Result<Vec<ImageU8>> {
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    if frames.len() == 1 {
        let zero = crate::flow::FlowField::zeros(frames[0].h, frames[0].w);
        return Ok(vec![encode_flow_rgb(&zero, clip_mag)?]);
    }
    let mut out = Vec::with_capacity(frames.len());
    for t in 0..frames.len() - 1 {
        let field = compute_flow(&frames[t], &frames[t + 1], params)?;
        out.push(encode_flow_rgb(&field, clip_mag)?);
    }
    out.push(out[frames.len() - 2].clone());
    Ok(out)
}

/// Build an id for label round-trips in tests and tools.
pub fn labels_for(segment: &VideoSegment, source: &str) -> SegmentLabels {
    SegmentLabels {
        gesture: segment.gesture,
        gesture_raw: gesture_raw_label(segment.gesture),
        task: segment.task,
        task_name: TASK_NAMES[segment.task as usize].to_string(),
        source: source.to_string(),
        start_time: 0.0,
        end_time: segment.len() as f64,
    }
}
