//! Sign generator and patch discriminator.

use serde::{Deserialize, Serialize};

use super::{Activation, NetsError, ParamSet, Result};
use crate::tensor::{seeded_rng, Conv3dSpec, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorArch {
    pub feature_len: usize,
    pub seed_channels: usize,
    pub seed_size: usize,
    /// Output channels of each upsample + conv block; the last is the sign's.
    pub block_channels: Vec<usize>,
    pub activation: Activation,
}

impl Default for GeneratorArch {
    fn default() -> Self {
        Self {
            feature_len: 640,
            seed_channels: 64,
            seed_size: 4,
            block_channels: vec![32, 16, 3],
            activation: Activation::LeakyRelu { slope: 0.2 },
        }
    }
}

impl GeneratorArch {
    /// `(channels, height, width)` of the generated sign.
    pub fn sign_shape(&self) -> [usize; 3] {
        let s = self.seed_size << self.block_channels.len();
        [*self.block_channels.last().unwrap_or(&self.seed_channels), s, s]
    }
}

/// Maps an encoder feature vector to a sign image in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    arch: GeneratorArch,
    params: ParamSet,
}

const PAD_SAME: Conv3dSpec = Conv3dSpec { stride: [1, 1, 1], padding: [0, 1, 1] };

impl Generator {
    pub fn new(arch: GeneratorArch, seed: u64) -> Result<Self> {
        if arch.feature_len == 0 || arch.seed_channels == 0 || arch.seed_size == 0 || arch.block_channels.is_empty() {
            return Err(NetsError::Config("generator sizes must be non-zero with at least one block".into()));
        }
        let mut rng = seeded_rng(seed);
        let mut p = ParamSet::new();
        let gain = arch.activation.gain();
        let seed_len = arch.seed_channels * arch.seed_size * arch.seed_size;
        p.push_init("fc.w", &[arch.feature_len, seed_len], arch.feature_len, gain, &mut rng);
        p.push("fc.b", Tensor::zeros(&[seed_len]));
        let mut c_in = arch.seed_channels;
        for (i, &c) in arch.block_channels.iter().enumerate() {
            let g = if i + 1 == arch.block_channels.len() { 1.0 } else { gain };
            p.push_init(&format!("block{i}.w"), &[c, c_in, 1, 3, 3], c_in * 9, g, &mut rng);
            p.push(format!("block{i}.b"), Tensor::zeros(&[c, 1, 1, 1]));
            c_in = c;
        }
        Ok(Self { arch, params: p })
    }

    pub fn arch(&self) -> &GeneratorArch {
        &self.arch
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Standardizes a raw feature vector to zero mean and unit variance.
    pub fn condition(&self, feature: &Tensor) -> Result<Tensor> {
        if feature.len() != self.arch.feature_len {
            return Err(TensorError::Dimension(format!(
                "generator expects a feature of length {}, got {}",
                self.arch.feature_len,
                feature.len()
            ))
            .into());
        }
        let n = feature.len() as f64;
        let mean = feature.sum() / n;
        let var = feature.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt().max(1e-6);
        Ok(feature.map(|v| (v - mean) / sd).reshape(&[feature.len()])?)
    }

    /// Sign `[c, s, s]` from a conditioned feature `z` of shape `[feature_len]`.
    pub fn forward<'t>(&self, p: &[Var<'t>], z: Var<'t>) -> Result<Var<'t>> {
        let a = &self.arch;
        let s = a.seed_size;
        let mut x = z.reshape(&[1, a.feature_len])?.matmul(p[0])?.add(p[1])?;
        x = a.activation.apply(x).reshape(&[1, a.seed_channels, 1, s, s])?;
        let last = a.block_channels.len() - 1;
        for i in 0..=last {
            x = x.upsample_nearest(2)?.conv3d(p[2 + 2 * i], PAD_SAME)?.add(p[3 + 2 * i])?;
            x = if i == last { x.sigmoid() } else { a.activation.apply(x) };
        }
        Ok(x.reshape(&a.sign_shape())?)
    }

    /// `G(feature)` evaluated without gradients.
    pub fn generate_sign(&self, feature: &Tensor) -> Result<Tensor> {
        let z = self.condition(feature)?;
        let tape = Tape::new();
        let p = self.params.attach_frozen(&tape);
        Ok(self.forward(&p, tape.constant(z))?.value())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorArch {
    pub channels: usize,
    pub size: usize,
    /// Output channels of each stride-2, 4x4 conv layer.
    pub conv_channels: Vec<usize>,
    pub activation: Activation,
}

impl Default for DiscriminatorArch {
    fn default() -> Self {
        Self { channels: 3, size: 32, conv_channels: vec![8, 16], activation: Activation::LeakyRelu { slope: 0.2 } }
    }
}

/// Margin keeping discriminator scores strictly inside `(0, 1)`.
pub const D_MARGIN: f64 = 1e-6;

/// Patch classifier scoring how much a sign looks like the real one.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    arch: DiscriminatorArch,
    params: ParamSet,
}

const DOWN: Conv3dSpec = Conv3dSpec { stride: [1, 2, 2], padding: [0, 1, 1] };

impl Discriminator {
    pub fn new(arch: DiscriminatorArch, seed: u64) -> Result<Self> {
        if arch.channels == 0 || arch.conv_channels.contains(&0) {
            return Err(NetsError::Config("discriminator widths must be non-zero".into()));
        }
        let mut size = arch.size;
        for _ in &arch.conv_channels {
            if size < 2 || !size.is_multiple_of(2) {
                return Err(NetsError::Config(format!(
                    "discriminator input size {} does not halve cleanly",
                    arch.size
                )));
            }
            size /= 2;
        }
        let mut rng = seeded_rng(seed);
        let mut p = ParamSet::new();
        let gain = arch.activation.gain();
        let mut c_in = arch.channels;
        for (i, &c) in arch.conv_channels.iter().enumerate() {
            p.push_init(&format!("conv{i}.w"), &[c, c_in, 1, 4, 4], c_in * 16, gain, &mut rng);
            p.push(format!("conv{i}.b"), Tensor::zeros(&[c, 1, 1, 1]));
            c_in = c;
        }
        let flat = c_in * size * size;
        p.push_init("out.w", &[flat, 1], flat, 1.0, &mut rng);
        p.push("out.b", Tensor::zeros(&[1]));
        Ok(Self { arch, params: p })
    }

    pub fn arch(&self) -> &DiscriminatorArch {
        &self.arch
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Scores `[b]` in `(0, 1)` for images `[b, c, size, size]`.
    pub fn forward<'t>(&self, p: &[Var<'t>], images: Var<'t>) -> Result<Var<'t>> {
        let a = &self.arch;
        let s = images.shape();
        if s.len() != 4 || s[1..] != [a.channels, a.size, a.size] {
            return Err(TensorError::Dimension(format!(
                "discriminator expects [b, {}, {}, {}], got {s:?}",
                a.channels, a.size, a.size
            ))
            .into());
        }
        let b = s[0];
        let mut x = images.reshape(&[b, s[1], 1, s[2], s[3]])?;
        for i in 0..a.conv_channels.len() {
            x = a.activation.apply(x.conv3d(p[2 * i], DOWN)?.add(p[2 * i + 1])?);
        }
        let flat = x.shape()[1..].iter().product();
        let k = 2 * a.conv_channels.len();
        let logit = x.reshape(&[b, flat])?.matmul(p[k])?.add(p[k + 1])?;
        Ok(logit.sigmoid().scale(1.0 - 2.0 * D_MARGIN).add_scalar(D_MARGIN).reshape(&[b])?)
    }

    /// Scores for a stack of images, without gradients.
    pub fn score(&self, images: &Tensor) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let p = self.params.attach_frozen(&tape);
        Ok(self.forward(&p, tape.constant(images.clone()))?.value().into_vec())
    }
}
