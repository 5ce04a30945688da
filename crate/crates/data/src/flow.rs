//! Dense optical flow: Horn–Schunck with a coarse-to-fine pyramid, and the
//! invertible flow → RGB encoding the motion stream consumes.
//!
//! The pyramid exists because plain Horn–Schunck linearizes the brightness
//! constancy term and loses displacements beyond ~1 px; solving coarse to
//! fine with warping recovers the multi-pixel motions the sprite programs
//! and the recovery tests use. The per-level solver is the classic
//! iteration with smoothness weight α.

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::image::ImageU8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HornSchunckParams {
    /// Smoothness weight α.
    pub alpha: f64,
    /// Jacobi iterations per pyramid level.
    pub iterations: usize,
    /// Pyramid depth (1 = single scale).
    pub levels: usize,
}

impl Default for HornSchunckParams {
    fn default() -> Self {
        HornSchunckParams {
            alpha: 15.0,
            iterations: 100,
            levels: 3,
        }
    }
}

/// Per-pixel displacement in pixels per frame interval, from frame t to
/// frame t+1.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub h: usize,
    pub w: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(h: usize, w: usize) -> Self {
        FlowField {
            h,
            w,
            u: vec![0.0; h * w],
            v: vec![0.0; h * w],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(self.v.iter())
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn median_uv(&self) -> (f64, f64) {
        (median(&self.u), median(&self.v))
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

struct Gray {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Gray {
    // Luma kept on the 0..255 scale: the smoothness weight α is balanced
    // against intensity gradients of that magnitude.
    fn from_image(img: &ImageU8) -> Gray {
        let mut data = Vec::with_capacity(img.h * img.w);
        for y in 0..img.h {
            for x in 0..img.w {
                let [r, g, b] = img.pixel(y, x);
                data.push(0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64);
            }
        }
        Gray {
            h: img.h,
            w: img.w,
            data,
        }
    }

    #[inline]
    fn at(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    fn sample_bilinear(&self, y: f64, x: f64) -> f64 {
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let y1 = (y0 + 1).min(self.h - 1);
        let x1 = (x0 + 1).min(self.w - 1);
        let wy = y - y0 as f64;
        let wx = x - x0 as f64;
        let p00 = self.data[y0 * self.w + x0];
        let p01 = self.data[y0 * self.w + x1];
        let p10 = self.data[y1 * self.w + x0];
        let p11 = self.data[y1 * self.w + x1];
        p00 * (1.0 - wy) * (1.0 - wx)
            + p01 * (1.0 - wy) * wx
            + p10 * wy * (1.0 - wx)
            + p11 * wy * wx
    }

    fn downsample(&self) -> Gray {
        let h = (self.h / 2).max(1);
        let w = (self.w / 2).max(1);
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        acc += self.at((2 * y + dy) as isize, (2 * x + dx) as isize);
                    }
                }
                data.push(acc / 4.0);
            }
        }
        Gray { h, w, data }
    }

    fn warp(&self, flow: &FlowField) -> Gray {
        let mut data = Vec::with_capacity(self.h * self.w);
        for y in 0..self.h {
            for x in 0..self.w {
                let i = y * self.w + x;
                data.push(self.sample_bilinear(y as f64 + flow.v[i], x as f64 + flow.u[i]));
            }
        }
        Gray {
            h: self.h,
            w: self.w,
            data,
        }
    }
}

/// Classic Horn–Schunck derivative stencils over the 2×2×2 cube.
fn derivatives(a: &Gray, b: &Gray) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (h, w) = (a.h, a.w);
    let mut ex = vec![0.0; h * w];
    let mut ey = vec![0.0; h * w];
    let mut et = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            ex[i] = 0.25
                * (a.at(y, x + 1) - a.at(y, x) + a.at(y + 1, x + 1) - a.at(y + 1, x)
                    + b.at(y, x + 1)
                    - b.at(y, x)
                    + b.at(y + 1, x + 1)
                    - b.at(y + 1, x));
            ey[i] = 0.25
                * (a.at(y + 1, x) - a.at(y, x) + a.at(y + 1, x + 1) - a.at(y, x + 1)
                    + b.at(y + 1, x)
                    - b.at(y, x)
                    + b.at(y + 1, x + 1)
                    - b.at(y, x + 1));
            et[i] = 0.25
                * (b.at(y, x) - a.at(y, x) + b.at(y + 1, x) - a.at(y + 1, x)
                    + b.at(y, x + 1)
                    - a.at(y, x + 1)
                    + b.at(y + 1, x + 1)
                    - a.at(y + 1, x + 1));
        }
    }
    (ex, ey, et)
}

/// Weighted neighborhood average with the Horn–Schunck kernel
/// (1/6 edges, 1/12 corners), replicated borders.
fn local_average(field: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |y: isize, x: isize| -> f64 {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        field[y * w + x]
    };
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            out[y as usize * w + x as usize] = (at(y - 1, x) + at(y + 1, x) + at(y, x - 1)
                + at(y, x + 1))
                / 6.0
                + (at(y - 1, x - 1) + at(y - 1, x + 1) + at(y + 1, x - 1) + at(y + 1, x + 1))
                    / 12.0;
        }
    }
    out
}

fn horn_schunck_level(a: &Gray, b: &Gray, params: &HornSchunckParams) -> FlowField {
    let (h, w) = (a.h, a.w);
    let (ex, ey, et) = derivatives(a, b);
    let alpha_sq = params.alpha * params.alpha;
    let mut flow = FlowField::zeros(h, w);
    for _ in 0..params.iterations {
        let u_bar = local_average(&flow.u, h, w);
        let v_bar = local_average(&flow.v, h, w);
        for i in 0..h * w {
            let t = (ex[i] * u_bar[i] + ey[i] * v_bar[i] + et[i])
                / (alpha_sq + ex[i] * ex[i] + ey[i] * ey[i]);
            flow.u[i] = u_bar[i] - ex[i] * t;
            flow.v[i] = v_bar[i] - ey[i] * t;
        }
    }
    flow
}

fn upsample_flow(flow: &FlowField, h: usize, w: usize) -> FlowField {
    let mut out = FlowField::zeros(h, w);
    let sy = flow.h as f64 / h as f64;
    let sx = flow.w as f64 / w as f64;
    let sample = |field: &[f64], y: f64, x: f64| -> f64 {
        let y = y.clamp(0.0, (flow.h - 1) as f64);
        let x = x.clamp(0.0, (flow.w - 1) as f64);
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let y1 = (y0 + 1).min(flow.h - 1);
        let x1 = (x0 + 1).min(flow.w - 1);
        let wy = y - y0 as f64;
        let wx = x - x0 as f64;
        field[y0 * flow.w + x0] * (1.0 - wy) * (1.0 - wx)
            + field[y0 * flow.w + x1] * (1.0 - wy) * wx
            + field[y1 * flow.w + x0] * wy * (1.0 - wx)
            + field[y1 * flow.w + x1] * wy * wx
    };
    for y in 0..h {
        for x in 0..w {
            let fy = (y as f64 + 0.5) * sy - 0.5;
            let fx = (x as f64 + 0.5) * sx - 0.5;
            let i = y * w + x;
            // Displacements scale with resolution.
            out.u[i] = sample(&flow.u, fy, fx) / sx;
            out.v[i] = sample(&flow.v, fy, fx) / sy;
        }
    }
    out
}

/// Dense displacement estimate from `frame_a` to `frame_b`.
pub fn compute_flow(
    frame_a: &ImageU8,
    frame_b: &ImageU8,
    params: &HornSchunckParams,
) -> Result<FlowField> {
    if frame_a.h != frame_b.h || frame_a.w != frame_b.w {
        return Err(DataError::SizeMismatch {
            a_h: frame_a.h,
            a_w: frame_a.w,
            b_h: frame_b.h,
            b_w: frame_b.w,
        });
    }
    if params.levels == 0 || params.iterations == 0 {
        return Err(DataError::InvalidArgument {
            op: "compute_flow",
            msg: "levels and iterations must be positive".into(),
        });
    }
    let mut pyramid_a = vec![Gray::from_image(frame_a)];
    let mut pyramid_b = vec![Gray::from_image(frame_b)];
    for _ in 1..params.levels {
        let next_a = pyramid_a.last().expect("non-empty").downsample();
        let next_b = pyramid_b.last().expect("non-empty").downsample();
        if next_a.h < 8 || next_a.w < 8 {
            break;
        }
        pyramid_a.push(next_a);
        pyramid_b.push(next_b);
    }

    let coarsest = pyramid_a.len() - 1;
    let mut flow = FlowField::zeros(pyramid_a[coarsest].h, pyramid_a[coarsest].w);
    for level in (0..=coarsest).rev() {
        let a = &pyramid_a[level];
        let b = &pyramid_b[level];
        if flow.h != a.h || flow.w != a.w {
            flow = upsample_flow(&flow, a.h, a.w);
        }
        let warped = b.warp(&flow);
        let residual = horn_schunck_level(a, &warped, params);
        for i in 0..flow.u.len() {
            flow.u[i] += residual.u[i];
            flow.v[i] += residual.v[i];
        }
    }
    Ok(flow)
}

// ── Flow → RGB encoding ──────────────────────────────────────────────

/// Encode a flow field as an RGB image:
/// R = 128 + round(127·clamp(u/mag)), G likewise for v,
/// B = round(255·clamp(‖(u,v)‖/mag)). Zero flow encodes as (128, 128, 0).
pub fn encode_flow_rgb(flow: &FlowField, clip_mag: f64) -> Result<ImageU8> {
    if clip_mag <= 0.0 {
        return Err(DataError::InvalidArgument {
            op: "encode_flow_rgb",
            msg: "clip_mag must be positive".into(),
        });
    }
    let mut data = Vec::with_capacity(flow.h * flow.w * 3);
    for i in 0..flow.h * flow.w {
        let u = (flow.u[i] / clip_mag).clamp(-1.0, 1.0);
        let v = (flow.v[i] / clip_mag).clamp(-1.0, 1.0);
        let mag = (flow.u[i].hypot(flow.v[i]) / clip_mag).clamp(0.0, 1.0);
        data.push((128.0 + (127.0 * u).round()) as u8);
        data.push((128.0 + (127.0 * v).round()) as u8);
        data.push((255.0 * mag).round() as u8);
    }
    ImageU8::new(flow.h, flow.w, data)
}

/// Invert [`encode_flow_rgb`] (the magnitude channel is redundant and
/// ignored). Exact up to the quantization step `clip_mag / 127`.
pub fn decode_flow_rgb(img: &ImageU8, clip_mag: f64) -> FlowField {
    let mut flow = FlowField::zeros(img.h, img.w);
    for i in 0..img.h * img.w {
        flow.u[i] = (img.data[i * 3] as f64 - 128.0) / 127.0 * clip_mag;
        flow.v[i] = (img.data[i * 3 + 1] as f64 - 128.0) / 127.0 * clip_mag;
    }
    flow
}

/// Horizontal mirror of a flow-RGB image: pixels flip and the u channel
/// reflects around its neutral value 128, so rightward motion becomes
/// leftward motion of the same magnitude.
pub fn mirror_flow_rgb(img: &ImageU8) -> ImageU8 {
    let mut out = img.mirror_horizontal();
    for i in 0..out.h * out.w {
        let r = out.data[i * 3] as u16;
        out.data[i * 3] = (256u16.saturating_sub(r)).min(255) as u8;
    }
    out
}
