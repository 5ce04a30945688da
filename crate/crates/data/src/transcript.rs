//! Annotation transcripts ("start_frame end_frame gesture_id" lines) and
//! the fixed gesture/task label vocabularies.

use crate::error::{DataError, Result};

/// Task vocabulary, in class order 0..2.
pub const TASK_NAMES: [&str; 3] = ["Suturing", "NeedlePassing", "KnotTying"];

pub fn task_index(name: &str) -> Result<u8> {
    TASK_NAMES
        .iter()
        .position(|&t| t == name)
        .map(|i| i as u8)
        .ok_or_else(|| DataError::UnknownTask(name.to_string()))
}

/// Fixed bijection from the raw 15-symbol vocabulary onto 14 classes:
/// G1..G6 → 0..5 and G8..G15 → 6..13. G7 has no recorded data and no class.
pub fn gesture_class(raw: &str) -> Result<u8> {
    let n: u32 = raw
        .strip_prefix('G')
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| DataError::UnknownGesture(raw.to_string()))?;
    match n {
        1..=6 => Ok((n - 1) as u8),
        7 => Err(DataError::UnknownGesture(raw.to_string())),
        8..=15 => Ok((n - 2) as u8),
        _ => Err(DataError::UnknownGesture(raw.to_string())),
    }
}

/// Inverse of [`gesture_class`].
pub fn gesture_raw_label(class: u8) -> String {
    let n = if class < 6 { class + 1 } else { class + 2 };
    format!("G{n}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub start_frame: u64,
    pub end_frame: u64,
    pub gesture_raw: String,
    /// `start_frame / source_fps`, seconds.
    pub start_time: f64,
    pub end_time: f64,
}

/// Parse transcript text at a given source frame rate. Output is sorted by
/// start frame; malformed lines are rejected with their 1-based line
/// number, and overlapping entries are rejected outright.
pub fn parse_transcript(text: &str, source_fps: f64) -> Result<Vec<TranscriptEntry>> {
    if source_fps <= 0.0 {
        return Err(DataError::InvalidArgument {
            op: "parse_transcript",
            msg: format!("source_fps must be positive, got {source_fps}"),
        });
    }
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(DataError::Transcript {
                line: line_no,
                msg: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let start_frame: u64 = fields[0].parse().map_err(|_| DataError::Transcript {
            line: line_no,
            msg: format!("bad start frame '{}'", fields[0]),
        })?;
        let end_frame: u64 = fields[1].parse().map_err(|_| DataError::Transcript {
            line: line_no,
            msg: format!("bad end frame '{}'", fields[1]),
        })?;
        if end_frame <= start_frame {
            return Err(DataError::Transcript {
                line: line_no,
                msg: format!("end frame {end_frame} must exceed start frame {start_frame}"),
            });
        }
        entries.push(TranscriptEntry {
            start_frame,
            end_frame,
            gesture_raw: fields[2].to_string(),
            start_time: start_frame as f64 / source_fps,
            end_time: end_frame as f64 / source_fps,
        });
    }
    entries.sort_by_key(|e| e.start_frame);
    for pair in entries.windows(2) {
        if pair[1].start_frame < pair[0].end_frame {
            return Err(DataError::Overlap {
                a_start: pair[0].start_frame,
                a_end: pair[0].end_frame,
                b_start: pair[1].start_frame,
                b_end: pair[1].end_frame,
            });
        }
    }
    Ok(entries)
}

/// Render entries back to transcript text (inverse of [`parse_transcript`]
/// on valid input).
pub fn format_transcript(entries: &[TranscriptEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{} {} {}\n", e.start_frame, e.end_frame, e.gesture_raw))
        .collect()
}

/// Frame indices sampled at `extraction_fps` over `[start_time, end_time)`:
/// sample times `start + k/extraction_fps` map to the nearest source frame.
pub fn sample_frame_indices(
    start_time: f64,
    end_time: f64,
    extraction_fps: f64,
    source_fps: f64,
    total_frames: usize,
) -> Result<Vec<usize>> {
    if extraction_fps <= 0.0 {
        return Err(DataError::InvalidArgument {
            op: "sample_frames",
            msg: "extraction_fps must be positive".into(),
        });
    }
    let duration = total_frames as f64 / source_fps;
    if start_time < 0.0 || end_time > duration + 1e-9 || total_frames == 0 {
        return Err(DataError::InvalidArgument {
            op: "sample_frames",
            msg: format!(
                "range [{start_time}, {end_time}) outside video of {total_frames} frames ({duration:.3}s)"
            ),
        });
    }
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = start_time + k as f64 / extraction_fps;
        if t >= end_time {
            break;
        }
        let idx = ((t * source_fps).round() as usize).min(total_frames - 1);
        out.push(idx);
        k += 1;
    }
    Ok(out)
}
