//! Fixed sparse resampling maps between two multi-channel images.
//!
//! A [`SparsePlan`] lists, for a subset of output pixels, the source pixels and
//! weights that produce them. Output pixels not listed keep the value of a base
//! image. The map is linear in the source, so its gradient is the transposed
//! scatter of the same weights.

use super::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub src: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsePlan {
    /// Output image spatial size `(height, width)`.
    pub out_hw: (usize, usize),
    /// Source image spatial size `(height, width)`.
    pub src_hw: (usize, usize),
    /// Covered output pixel (flat `y * w + x`) and its source taps.
    pub entries: Vec<(usize, Vec<Tap>)>,
}

impl SparsePlan {
    pub fn covered_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.out_hw.0 * self.out_hw.1];
        for (p, _) in &self.entries {
            mask[*p] = true;
        }
        mask
    }

    fn check(&self, base: Option<&[usize]>, src: &[usize]) -> Result<usize> {
        if src.len() != 3 || (src[1], src[2]) != self.src_hw {
            return Err(TensorError::Dimension(format!(
                "sparse plan expects source [c, {}, {}], got {src:?}",
                self.src_hw.0, self.src_hw.1
            )));
        }
        if let Some(b) = base {
            if b.len() != 3 || b[0] != src[0] || (b[1], b[2]) != self.out_hw {
                return Err(TensorError::Dimension(format!(
                    "sparse plan expects base [{}, {}, {}], got {b:?}",
                    src[0], self.out_hw.0, self.out_hw.1
                )));
            }
        }
        Ok(src[0])
    }

    /// Applies the plan; uncovered pixels come from `base` (zeros if `None`).
    pub fn apply(&self, base: Option<&Tensor>, src: &Tensor) -> Result<Tensor> {
        let channels = self.check(base.map(|b| b.shape()), src.shape())?;
        let (oh, ow) = self.out_hw;
        let ovol = oh * ow;
        let svol = self.src_hw.0 * self.src_hw.1;
        let mut out = match base {
            Some(b) => b.to_vec(),
            None => vec![0.0; channels * ovol],
        };
        let s = src.data();
        for ch in 0..channels {
            let so = &s[ch * svol..(ch + 1) * svol];
            let oo = &mut out[ch * ovol..(ch + 1) * ovol];
            for (p, taps) in &self.entries {
                oo[*p] = taps.iter().map(|t| t.weight * so[t.src]).sum();
            }
        }
        Ok(Tensor::from_parts(vec![channels, oh, ow], out))
    }

    /// Gradient of `apply` with respect to the base image.
    pub(crate) fn grad_base(&self, dy: &[f64], channels: usize) -> Vec<f64> {
        let ovol = self.out_hw.0 * self.out_hw.1;
        let mut g = dy.to_vec();
        for ch in 0..channels {
            for (p, _) in &self.entries {
                g[ch * ovol + p] = 0.0;
            }
        }
        g
    }

    /// Gradient of `apply` with respect to the source image.
    pub(crate) fn grad_src(&self, dy: &[f64], channels: usize) -> Vec<f64> {
        let ovol = self.out_hw.0 * self.out_hw.1;
        let svol = self.src_hw.0 * self.src_hw.1;
        let mut g = vec![0.0; channels * svol];
        for ch in 0..channels {
            for (p, taps) in &self.entries {
                let d = dy[ch * ovol + p];
                if d == 0.0 {
                    continue;
                }
                for t in taps {
                    g[ch * svol + t.src] += t.weight * d;
                }
            }
        }
        g
    }
}
