//! Paired augmentation: one crop offset and one mirror decision per
//! RGB/flow pair, applied to both modalities in lockstep. Mirroring a
//! flow-RGB frame additionally reflects its horizontal-displacement
//! channel so the encoded motion flips with the pixels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DataError, Result};
use crate::flow::mirror_flow_rgb;
use crate::image::ImageU8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentDecision {
    pub offset_y: usize,
    pub offset_x: usize,
    pub mirror: bool,
}

/// Draw the (crop offset, mirror) decision for one frame pair.
pub fn draw_decision(
    seed: u64,
    img_h: usize,
    img_w: usize,
    crop_h: usize,
    crop_w: usize,
    mirror_enabled: bool,
) -> Result<AugmentDecision> {
    if crop_h > img_h || crop_w > img_w {
        return Err(DataError::InvalidArgument {
            op: "augment",
            msg: format!("crop {crop_h}x{crop_w} larger than image {img_h}x{img_w}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset_y = rng.random_range(0..=img_h - crop_h);
    let offset_x = rng.random_range(0..=img_w - crop_w);
    let mirror = mirror_enabled && rng.random_bool(0.5);
    Ok(AugmentDecision {
        offset_y,
        offset_x,
        mirror,
    })
}

/// Apply one decision to an RGB/flow-RGB pair.
pub fn apply_decision(
    rgb: &ImageU8,
    flow_rgb: &ImageU8,
    crop_h: usize,
    crop_w: usize,
    decision: AugmentDecision,
) -> Result<(ImageU8, ImageU8)> {
    if rgb.h != flow_rgb.h || rgb.w != flow_rgb.w {
        return Err(DataError::SizeMismatch {
            a_h: rgb.h,
            a_w: rgb.w,
            b_h: flow_rgb.h,
            b_w: flow_rgb.w,
        });
    }
    let mut rgb_out = rgb.crop(decision.offset_y, decision.offset_x, crop_h, crop_w)?;
    let mut flow_out = flow_rgb.crop(decision.offset_y, decision.offset_x, crop_h, crop_w)?;
    if decision.mirror {
        rgb_out = rgb_out.mirror_horizontal();
        flow_out = mirror_flow_rgb(&flow_out);
    }
    Ok((rgb_out, flow_out))
}

/// Draw and apply in one step (deterministic per `seed`).
pub fn augment_pair(
    rgb: &ImageU8,
    flow_rgb: &ImageU8,
    crop_h: usize,
    crop_w: usize,
    mirror_enabled: bool,
    seed: u64,
) -> Result<(ImageU8, ImageU8)> {
    let decision = draw_decision(seed, rgb.h, rgb.w, crop_h, crop_w, mirror_enabled)?;
    apply_decision(rgb, flow_rgb, crop_h, crop_w, decision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{decode_flow_rgb, encode_flow_rgb, FlowField};

    fn sample_images() -> (ImageU8, ImageU8) {
        let mut rgb = ImageU8::filled(6, 6, [0, 0, 0]);
        for y in 0..6 {
            for x in 0..6 {
                rgb.set_pixel(y, x, [(y * 40) as u8, (x * 40) as u8, 7]);
            }
        }
        let mut flow = FlowField::zeros(6, 6);
        for i in 0..36 {
            flow.u[i] = 2.0;
        }
        (rgb, encode_flow_rgb(&flow, 8.0).unwrap())
    }

    #[test]
    fn full_size_crop_without_mirror_is_identity() {
        let (rgb, flow) = sample_images();
        // mirror disabled: the only decision left is the zero offset.
        let (r, f) = augment_pair(&rgb, &flow, 6, 6, false, 1).unwrap();
        assert_eq!(r, rgb);
        assert_eq!(f, flow);
    }

    #[test]
    fn same_seed_same_decision_for_both_modalities() {
        let (rgb, flow) = sample_images();
        let d1 = draw_decision(42, rgb.h, rgb.w, 4, 4, true).unwrap();
        let d2 = draw_decision(42, flow.h, flow.w, 4, 4, true).unwrap();
        assert_eq!(d1, d2);
        // The pair is cropped at the same offset: pixels line up.
        let (r, f) = augment_pair(&rgb, &flow, 4, 4, false, 42).unwrap();
        let d = draw_decision(42, 6, 6, 4, 4, false).unwrap();
        assert_eq!(r.pixel(0, 0), rgb.pixel(d.offset_y, d.offset_x));
        assert_eq!(f.pixel(0, 0), flow.pixel(d.offset_y, d.offset_x));
    }

    #[test]
    fn oversized_crop_is_rejected() {
        let (rgb, flow) = sample_images();
        assert!(augment_pair(&rgb, &flow, 7, 6, false, 1).is_err());
    }

    #[test]
    fn mirrored_rightward_flow_becomes_leftward() {
        let (rgb, flow) = sample_images();
        let decision = AugmentDecision {
            offset_y: 0,
            offset_x: 0,
            mirror: true,
        };
        let (_, f) = apply_decision(&rgb, &flow, 6, 6, decision).unwrap();
        let decoded = decode_flow_rgb(&f, 8.0);
        for i in 0..36 {
            assert!(
                (decoded.u[i] + 2.0).abs() <= 8.0 / 127.0 + 1e-9,
                "u = {}",
                decoded.u[i]
            );
        }
    }
}
