//! Fixed-length clip windows over segments, and their conversion to
//! network inputs.

use gestnet_core::network::{ClipInput, Modality};
use gestnet_core::Scalar;
use gestnet_data::augment::{apply_decision, draw_decision, AugmentDecision};
use gestnet_data::{ImageU8, VideoSegment};

use crate::config::RunConfig;
use crate::error::{Result, TrainError};

/// Strided window starts over a segment of `n` frames, plus a tail window
/// at `n − len` when the stride pattern would leave trailing frames
/// uncovered. Every frame of every admissible segment lands in a window.
pub fn clip_starts(n: usize, len: usize, stride: usize) -> Vec<usize> {
    assert!(len >= 1 && stride >= 1);
    if n < len {
        return Vec::new();
    }
    let mut starts: Vec<usize> = (0..=n - len).step_by(stride).collect();
    let tail = n - len;
    if *starts.last().expect("n >= len") != tail {
        starts.push(tail);
    }
    starts
}

/// One fixed-length window of paired frames with continuation markers
/// (0 at clip start, 1 elsewhere) and the parent segment's labels.
#[derive(Debug, Clone)]
pub struct ClipSequence {
    pub segment_id: String,
    pub start: usize,
    pub rgb: Vec<ImageU8>,
    pub flow: Vec<ImageU8>,
    pub markers: Vec<u8>,
    pub gesture: u8,
    pub task: u8,
}

/// All strided windows of a segment (with the tail rule).
pub fn extract_clips(segment: &VideoSegment, len: usize, stride: usize) -> Result<Vec<ClipSequence>> {
    if segment.len() < len {
        return Err(TrainError::SegmentTooShort {
            id: segment.id.clone(),
            len: segment.len(),
            need: len,
        });
    }
    Ok(clip_starts(segment.len(), len, stride)
        .into_iter()
        .map(|start| window(segment, start, len))
        .collect())
}

/// One window at a chosen offset (training-time random windows use this).
pub fn window(segment: &VideoSegment, start: usize, len: usize) -> ClipSequence {
    ClipSequence {
        segment_id: segment.id.clone(),
        start,
        rgb: segment.frames_rgb[start..start + len].to_vec(),
        flow: segment.frames_flow[start..start + len].to_vec(),
        markers: ClipInput::<f32>::fresh_markers(len),
        gesture: segment.gesture,
        task: segment.task,
    }
}

fn center_decision(img_h: usize, img_w: usize, crop: usize) -> AugmentDecision {
    AugmentDecision {
        offset_y: (img_h - crop) / 2,
        offset_x: (img_w - crop) / 2,
        mirror: false,
    }
}

/// Resize, crop, and tensorize a clip. Inference uses the deterministic
/// center crop; training draws one decision per clip and applies it to
/// every frame pair, so motion stays spatially coherent across the window.
/// `modality` restricts the work to the stream a single-stream form
/// consumes; the other side is left empty.
pub fn tensorize_for<S: Scalar>(
    clip: &ClipSequence,
    config: &RunConfig,
    augment_seed: Option<u64>,
    modality: Option<Modality>,
) -> Result<ClipInput<S>> {
    let crop = config.crop;
    let decision = match augment_seed {
        Some(seed) => draw_decision(
            seed,
            config.train_h,
            config.train_w,
            crop,
            crop,
            config.mirror_augment,
        )?,
        None => center_decision(config.train_h, config.train_w, crop),
    };
    let mut rgb = Vec::with_capacity(clip.rgb.len());
    let mut flow = Vec::with_capacity(clip.flow.len());
    for (r, f) in clip.rgb.iter().zip(clip.flow.iter()) {
        // The pairing contract stands regardless of which streams are
        // materialized: one decision applies to both members.
        let r = r.resize(config.train_h, config.train_w)?;
        let f = f.resize(config.train_h, config.train_w)?;
        let (r, f) = apply_decision(&r, &f, crop, crop, decision)?;
        if modality != Some(Modality::Flow) {
            rgb.push(r.to_tensor::<S>());
        }
        if modality != Some(Modality::Rgb) {
            flow.push(f.to_tensor::<S>());
        }
    }
    Ok(ClipInput {
        rgb,
        flow,
        markers: clip.markers.clone(),
    })
}

/// [`tensorize_for`] with both streams materialized.
pub fn tensorize<S: Scalar>(
    clip: &ClipSequence,
    config: &RunConfig,
    augment_seed: Option<u64>,
) -> Result<ClipInput<S>> {
    tensorize_for(clip, config, augment_seed, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strided_starts_with_tail_rule() {
        assert_eq!(clip_starts(16, 8, 4), vec![0, 4, 8]);
        assert_eq!(clip_starts(8, 8, 4), vec![0]);
        assert_eq!(clip_starts(10, 8, 4), vec![0, 2]);
        assert_eq!(clip_starts(7, 8, 4), Vec::<usize>::new());
    }

    #[test]
    fn extract_rejects_short_segments() {
        let segment = VideoSegment {
            id: "short".into(),
            gesture: 0,
            task: 0,
            frames_rgb: vec![ImageU8::filled(8, 8, [0, 0, 0]); 5],
            frames_flow: vec![ImageU8::filled(8, 8, [128, 128, 0]); 5],
        };
        assert!(matches!(
            extract_clips(&segment, 8, 4),
            Err(TrainError::SegmentTooShort { .. })
        ));
    }

    proptest! {
        #[test]
        fn every_frame_is_covered(n in 8usize..64, stride in 1usize..8) {
            let starts = clip_starts(n, 8, stride);
            let mut covered = vec![false; n];
            for s in starts {
                covered[s..s + 8].fill(true);
            }
            prop_assert!(covered.iter().all(|&c| c));
        }
    }
}
