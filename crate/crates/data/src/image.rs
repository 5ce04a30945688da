//! 8-bit RGB images (row-major HWC) with the handful of geometric ops the
//! pipeline needs, plus PNG round-trips.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use gestnet_core::{Scalar, Tensor};

use crate::error::{DataError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageU8 {
    pub h: usize,
    pub w: usize,
    /// `h × w × 3` bytes, row-major.
    pub data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != h * w * 3 {
            return Err(DataError::InvalidArgument {
                op: "ImageU8::new",
                msg: format!("expected {} bytes, got {}", h * w * 3, data.len()),
            });
        }
        Ok(ImageU8 { h, w, data })
    }

    pub fn filled(h: usize, w: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(h * w * 3);
        for _ in 0..h * w {
            data.extend_from_slice(&rgb);
        }
        ImageU8 { h, w, data }
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.w + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Deterministic bilinear resize with pixel-center alignment. Resizing
    /// to the same size reproduces the input exactly.
    pub fn resize(&self, target_h: usize, target_w: usize) -> Result<ImageU8> {
        if target_h == 0 || target_w == 0 {
            return Err(DataError::InvalidArgument {
                op: "resize",
                msg: "target extents must be positive".into(),
            });
        }
        if target_h == self.h && target_w == self.w {
            // Pixel-center bilinear at the same size reproduces the input
            // exactly (the identity test pins this); skip the arithmetic.
            return Ok(self.clone());
        }
        let sy = self.h as f64 / target_h as f64;
        let sx = self.w as f64 / target_w as f64;
        let mut out = Vec::with_capacity(target_h * target_w * 3);
        for ty in 0..target_h {
            let fy = ((ty as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.h - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.h - 1);
            let wy = fy - y0 as f64;
            for tx in 0..target_w {
                let fx = ((tx as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.w - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.w - 1);
                let wx = fx - x0 as f64;
                for c in 0..3 {
                    let p00 = self.data[(y0 * self.w + x0) * 3 + c] as f64;
                    let p01 = self.data[(y0 * self.w + x1) * 3 + c] as f64;
                    let p10 = self.data[(y1 * self.w + x0) * 3 + c] as f64;
                    let p11 = self.data[(y1 * self.w + x1) * 3 + c] as f64;
                    let top = p00 * (1.0 - wx) + p01 * wx;
                    let bottom = p10 * (1.0 - wx) + p11 * wx;
                    let v = top * (1.0 - wy) + bottom * wy;
                    out.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        ImageU8::new(target_h, target_w, out)
    }

    pub fn crop(&self, y0: usize, x0: usize, crop_h: usize, crop_w: usize) -> Result<ImageU8> {
        if y0 + crop_h > self.h || x0 + crop_w > self.w {
            return Err(DataError::InvalidArgument {
                op: "crop",
                msg: format!(
                    "crop {crop_h}x{crop_w}+{y0}+{x0} exceeds image {}x{}",
                    self.h, self.w
                ),
            });
        }
        let mut data = Vec::with_capacity(crop_h * crop_w * 3);
        for y in y0..y0 + crop_h {
            let row = (y * self.w + x0) * 3;
            data.extend_from_slice(&self.data[row..row + crop_w * 3]);
        }
        ImageU8::new(crop_h, crop_w, data)
    }

    pub fn mirror_horizontal(&self) -> ImageU8 {
        let mut out = self.clone();
        for y in 0..self.h {
            for x in 0..self.w {
                out.set_pixel(y, x, self.pixel(y, self.w - 1 - x));
            }
        }
        out
    }

    /// `C×H×W` tensor scaled to `[0, 1]`.
    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        let mut data = vec![S::zero(); 3 * self.h * self.w];
        for y in 0..self.h {
            for x in 0..self.w {
                let p = self.pixel(y, x);
                for c in 0..3 {
                    data[(c * self.h + y) * self.w + x] = S::of_f64(p[c] as f64 / 255.0);
                }
            }
        }
        Tensor {
            shape: vec![3, self.h, self.w],
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = File::create(path)?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.w as u32, self.h as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&self.data)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<ImageU8> {
        let decoder = png::Decoder::new(std::io::BufReader::new(File::open(path)?));
        let mut reader = decoder.read_info()?;
        let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf)?;
        let (w, h) = (info.width as usize, info.height as usize);
        let data = match info.color_type {
            png::ColorType::Rgb => buf[..h * w * 3].to_vec(),
            png::ColorType::Rgba => {
                let mut rgb = Vec::with_capacity(h * w * 3);
                for px in buf[..h * w * 4].chunks_exact(4) {
                    rgb.extend_from_slice(&px[..3]);
                }
                rgb
            }
            png::ColorType::Grayscale => {
                let mut rgb = Vec::with_capacity(h * w * 3);
                for &g in &buf[..h * w] {
                    rgb.extend_from_slice(&[g, g, g]);
                }
                rgb
            }
            other => {
                return Err(DataError::PngDecode(format!(
                    "unsupported color type {other:?}"
                )))
            }
        };
        ImageU8::new(h, w, data)
    }
}
