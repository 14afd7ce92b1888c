//! Built-in sign images, value noise and PNG conversion.

use std::path::Path;

use image::{ImageBuffer, Rgb};
use serde::{Deserialize, Serialize};

use super::{Result, SceneError};
use crate::tensor::Tensor;

/// Default sign resolution `(height, width)`.
pub const SIGN_RESOLUTION: (usize, usize) = (32, 32);

/// Synthetic stand-ins for roadside advertising signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Logo {
    /// White fruit glyph on a blue field.
    Orchard,
    /// Yellow double arch on a red field.
    Arches,
}

impl Logo {
    pub const ALL: [Logo; 2] = [Logo::Orchard, Logo::Arches];

    fn shade(self, x: f64, y: f64) -> [f64; 3] {
        match self {
            Logo::Orchard => {
                let body = (x - 0.47).powi(2) / 0.09 + (y - 0.58).powi(2) / 0.085 < 1.0;
                let bite = (x - 0.78).powi(2) + (y - 0.52).powi(2) < 0.011;
                let leaf = ((x - 0.55) * 0.8 + (y - 0.22) * 0.6).powi(2) / 0.004
                    + ((x - 0.55) * 0.6 - (y - 0.22) * 0.8).powi(2) / 0.0012
                    < 1.0;
                if (body && !bite) || leaf {
                    [0.96, 0.96, 0.94]
                } else {
                    [0.13, 0.31, 0.64]
                }
            }
            Logo::Arches => {
                let base = 0.62;
                let arch = [0.34, 0.66].iter().any(|&c| {
                    let r = ((x - c).powi(2) + (y - base).powi(2)).sqrt();
                    let ring = (0.09..0.17).contains(&r);
                    let leg = y > base && y < 0.84 && (0.09..0.17).contains(&(x - c).abs());
                    (ring && y <= base) || leg
                });
                if arch {
                    [0.99, 0.78, 0.10]
                } else {
                    [0.80, 0.12, 0.10]
                }
            }
        }
    }
}

/// Rounds to the nearest multiple of 1/255, the grid every rendered image lives on.
pub(crate) fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Renders a built-in logo at [`SIGN_RESOLUTION`] with 4x4 supersampling.
pub fn builtin_sign(logo: Logo) -> Tensor {
    let (h, w) = SIGN_RESOLUTION;
    let mut data = vec![0.0; 3 * h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = [0.0; 3];
            for si in 0..4 {
                for sj in 0..4 {
                    let x = (j as f64 + (sj as f64 + 0.5) / 4.0) / w as f64;
                    let y = (i as f64 + (si as f64 + 0.5) / 4.0) / h as f64;
                    let c = logo.shade(x, y);
                    for k in 0..3 {
                        acc[k] += c[k] / 16.0;
                    }
                }
            }
            for k in 0..3 {
                data[(k * h + i) * w + j] = quantize(acc[k]);
            }
        }
    }
    Tensor::new(&[3, h, w], data).expect("shape matches data")
}

fn lattice(seed: u64, i: i64, j: i64) -> f64 {
    let mut z = seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (j as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothly interpolated lattice noise in `[0, 1]`.
pub(crate) fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (i, j) = (fx as i64, fy as i64);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (s(x - fx), s(y - fy));
    let a = lattice(seed, i, j) * (1.0 - tx) + lattice(seed, i + 1, j) * tx;
    let b = lattice(seed, i, j + 1) * (1.0 - tx) + lattice(seed, i + 1, j + 1) * tx;
    a * (1.0 - ty) + b * ty
}

/// Two-octave value noise.
pub(crate) fn fractal_noise(seed: u64, x: f64, y: f64) -> f64 {
    (2.0 * value_noise(seed, x, y) + value_noise(seed ^ 0x5555, 2.7 * x, 2.7 * y)) / 3.0
}

/// Writes a `[3, h, w]` image as a 16-bit RGB PNG.
pub(crate) fn write_png16(image: &Tensor, path: &Path) -> Result<()> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(SceneError::Config(format!("expected a [3, h, w] image, got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let d = image.data();
    let mut raw = Vec::with_capacity(3 * h * w);
    for i in 0..h {
        for j in 0..w {
            for k in 0..3 {
                raw.push((d[(k * h + i) * w + j].clamp(0.0, 1.0) * 65535.0).round() as u16);
            }
        }
    }
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer size matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| SceneError::ingest(None, format!("writing {}: {e}", path.display())))
}

/// Reads any RGB(A) PNG into a `[3, h, w]` tensor in `[0, 1]`.
pub(crate) fn read_png(path: &Path) -> std::result::Result<Tensor, String> {
    let img = image::open(path).map_err(|e| format!("reading {}: {e}", path.display()))?.into_rgb16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, p) in img.enumerate_pixels() {
        for k in 0..3 {
            data[(k * h + y as usize) * w + x as usize] = p.0[k] as f64 / 65535.0;
        }
    }
    Tensor::new(&[3, h, w], data).map_err(|e| e.to_string())
}

pub fn save_sign_png(sign: &Tensor, path: &Path) -> Result<()> {
    write_png16(sign, path)
}

pub fn load_sign_png(path: &Path) -> Result<Tensor> {
    read_png(path).map_err(|m| SceneError::ingest(None, m))
}
