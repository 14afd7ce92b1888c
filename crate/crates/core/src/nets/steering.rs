//! Configurable 3D-CNN steering regressor.
//!
//! A window of `n` frames is one input volume `[1, c, n, h, w]` with time as
//! depth. Per-frame angles over a longer recording come from sliding the
//! window along it: the window ending at frame `i` (front-padded by repeating
//! frame 0) yields the angle for frame `i`.
//!
//! Leading convolutions whose temporal kernel, stride and padding are `1, 1, 0`
//! act on each frame separately, so they are evaluated once over the whole
//! recording and their outputs are gathered into windows afterwards.

use serde::{Deserialize, Serialize};

use super::{Activation, NetsError, ParamSet, Result};
use crate::tensor::{seeded_rng, Conv3dSpec, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub out_channels: usize,
    /// `[depth, height, width]`.
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvLayerSpec {
    fn frame_local(&self) -> bool {
        self.kernel[0] == 1 && self.stride[0] == 1 && self.padding[0] == 0
    }

    fn spec(&self) -> Conv3dSpec {
        Conv3dSpec::new(self.stride, self.padding)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteeringArch {
    /// Frames per window (`n`).
    pub window: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub convs: Vec<ConvLayerSpec>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Number of leading layers forming the encoder; defaults to all conv layers.
    pub encoder_split: Option<usize>,
}

impl Default for SteeringArch {
    fn default() -> Self {
        let conv = |out_channels, kernel, stride, padding| ConvLayerSpec { out_channels, kernel, stride, padding };
        Self {
            window: 20,
            channels: 3,
            height: 64,
            width: 64,
            convs: vec![
                conv(8, [1, 4, 4], [1, 4, 4], [0, 0, 0]),
                conv(16, [1, 3, 3], [1, 2, 2], [0, 1, 1]),
                conv(8, [4, 3, 3], [4, 2, 2], [0, 1, 1]),
            ],
            hidden: vec![16],
            activation: Activation::default(),
            encoder_split: None,
        }
    }
}

/// Per-layer shapes derived from an architecture.
#[derive(Debug, Clone)]
struct Layout {
    /// Output shape `[c, d, h, w]` of each conv layer for one window.
    conv_out: Vec<[usize; 4]>,
    flat: usize,
    split: usize,
    shared: usize,
}

impl SteeringArch {
    pub fn layer_count(&self) -> usize {
        self.convs.len() + self.hidden.len() + 1
    }

    pub fn split(&self) -> usize {
        self.encoder_split.unwrap_or(self.convs.len())
    }

    fn layout(&self) -> Result<Layout> {
        if self.window == 0 || self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(NetsError::Config("window and frame geometry must be non-zero".into()));
        }
        if self.hidden.contains(&0) || self.convs.iter().any(|c| c.out_channels == 0) {
            return Err(NetsError::Config("layer widths must be non-zero".into()));
        }
        let split = self.split();
        if split == 0 || split >= self.layer_count() {
            return Err(NetsError::Config(format!(
                "encoder split {split} must lie in 1..{} (between the first layer and the output layer)",
                self.layer_count()
            )));
        }
        let mut shape = [1, self.channels, self.window, self.height, self.width];
        let mut conv_out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            let k = [c.out_channels, shape[1], c.kernel[0], c.kernel[1], c.kernel[2]];
            shape = c.spec().output_shape(&shape, &k).map_err(|e| NetsError::Config(format!("conv layer {i}: {e}")))?;
            conv_out.push([shape[1], shape[2], shape[3], shape[4]]);
        }
        let flat = shape[1..].iter().product();
        let shared = self.convs.iter().take_while(|c| c.frame_local()).count().min(split);
        Ok(Layout { conv_out, flat, split, shared })
    }

    /// Length of the encoder feature vector.
    pub fn feature_len(&self) -> Result<usize> {
        let l = self.layout()?;
        Ok(if l.split <= self.convs.len() {
            l.conv_out[l.split - 1].iter().product()
        } else {
            self.hidden[l.split - self.convs.len() - 1]
        })
    }
}

/// Frame indices of the window ending at `end`, front-padded with frame 0.
pub fn window_indices(end: usize, n: usize) -> Vec<usize> {
    (0..n).map(|j| (end + j + 1).saturating_sub(n)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringModel {
    arch: SteeringArch,
    params: ParamSet,
}

impl SteeringModel {
    pub fn new(arch: SteeringArch, seed: u64) -> Result<Self> {
        let layout = arch.layout()?;
        let mut rng = seeded_rng(seed);
        let mut p = ParamSet::new();
        let gain = arch.activation.gain();
        let mut in_c = arch.channels;
        for (i, c) in arch.convs.iter().enumerate() {
            let fan_in = in_c * c.kernel.iter().product::<usize>();
            p.push_init(
                &format!("conv{i}.w"),
                &[c.out_channels, in_c, c.kernel[0], c.kernel[1], c.kernel[2]],
                fan_in,
                gain,
                &mut rng,
            );
            p.push(format!("conv{i}.b"), Tensor::zeros(&[c.out_channels, 1, 1, 1]));
            in_c = c.out_channels;
        }
        let mut fan_in = layout.flat;
        for (i, &h) in arch.hidden.iter().enumerate() {
            p.push_init(&format!("dense{i}.w"), &[fan_in, h], fan_in, gain, &mut rng);
            p.push(format!("dense{i}.b"), Tensor::zeros(&[h]));
            fan_in = h;
        }
        p.push_init("out.w", &[fan_in, 1], fan_in, 1.0, &mut rng);
        p.push("out.b", Tensor::zeros(&[1]));
        Ok(Self { arch, params: p })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes.
    pub fn from_params(arch: SteeringArch, params: ParamSet) -> Result<Self> {
        let reference = Self::new(arch.clone(), 0)?;
        reference.params.check_compatible(&params)?;
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &SteeringArch {
        &self.arch
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn window(&self) -> usize {
        self.arch.window
    }

    fn layout(&self) -> Layout {
        self.arch.layout().expect("architecture validated at construction")
    }

    fn check_frames(&self, shape: &[usize]) -> Result<usize> {
        let a = &self.arch;
        if shape.len() != 4 || shape[0] == 0 || shape[1..] != [a.channels, a.height, a.width] {
            return Err(TensorError::Dimension(format!(
                "steering model expects frames [n, {}, {}, {}], got {shape:?}",
                a.channels, a.height, a.width
            ))
            .into());
        }
        Ok(shape[0])
    }

    /// Applies layers `from..to`; `x` is 5-d before the flatten boundary, 2-d after.
    fn run<'t>(&self, p: &[Var<'t>], mut x: Var<'t>, from: usize, to: usize) -> Result<Var<'t>> {
        let nc = self.arch.convs.len();
        let last = self.arch.layer_count() - 1;
        for l in from..to {
            if l < nc {
                x = x.conv3d(p[2 * l], self.arch.convs[l].spec())?.add(p[2 * l + 1])?;
            } else {
                if x.shape().len() == 5 {
                    let b = x.shape()[0];
                    x = x.reshape(&[b, self.layout().flat])?;
                }
                x = x.matmul(p[2 * l])?.add(p[2 * l + 1])?;
            }
            if l != last {
                x = self.arch.activation.apply(x);
            }
        }
        Ok(x)
    }

    /// `[n, c, h, w]` recording to a single `[1, c, n, h, w]` volume.
    fn volume<'t>(frames: Var<'t>) -> Result<Var<'t>> {
        let s = frames.shape();
        Ok(frames.permute(&[1, 0, 2, 3])?.reshape(&[1, s[1], s[0], s[2], s[3]])?)
    }

    /// Encoder features `[ends.len(), feature_len]` of the windows ending at `ends`.
    pub fn encode_windows<'t>(&self, p: &[Var<'t>], frames: Var<'t>, ends: &[usize]) -> Result<Var<'t>> {
        let n = self.check_frames(&frames.shape())?;
        if let Some(e) = ends.iter().find(|&&e| e >= n) {
            return Err(TensorError::Dimension(format!("window end {e} beyond {n} frames")).into());
        }
        if ends.is_empty() {
            return Err(TensorError::Dimension("no windows requested".into()).into());
        }
        let layout = self.layout();
        let shared = self.run(p, Self::volume(frames)?, 0, layout.shared)?;
        let windows: Vec<Var<'t>> = ends
            .iter()
            .map(|&e| shared.index_select(2, &window_indices(e, self.arch.window)))
            .collect::<Result<_, _>>()?;
        let x = self.run(p, Var::concat(&windows, 0)?, layout.shared, layout.split)?;
        let s = x.shape();
        Ok(x.reshape(&[s[0], s[1..].iter().product()])?)
    }

    /// Dense head applied to encoder features `[b, feature_len]`; returns `[b]`.
    pub fn head<'t>(&self, p: &[Var<'t>], features: Var<'t>) -> Result<Var<'t>> {
        let layout = self.layout();
        let b = features.shape()[0];
        let mut x = features;
        if layout.split < self.arch.convs.len() {
            let [c, d, h, w] = layout.conv_out[layout.split - 1];
            x = x.reshape(&[b, c, d, h, w])?;
        }
        Ok(self.run(p, x, layout.split, self.arch.layer_count())?.reshape(&[b])?)
    }

    /// Angles `[ends.len()]` for the windows ending at `ends`.
    pub fn forward_windows<'t>(&self, p: &[Var<'t>], frames: Var<'t>, ends: &[usize]) -> Result<Var<'t>> {
        let f = self.encode_windows(p, frames, ends)?;
        self.head(p, f)
    }

    /// Reference path: every layer applied to one explicit `[1, c, n, h, w]` window.
    pub fn forward_volume<'t>(&self, p: &[Var<'t>], window: Var<'t>) -> Result<Var<'t>> {
        Ok(self.run(p, window, 0, self.arch.layer_count())?.reshape(&[1])?)
    }

    /// Per-frame angles for a `[n, c, h, w]` recording, no gradients.
    pub fn predict_frames(&self, frames: &Tensor) -> Result<Vec<f64>> {
        let n = self.check_frames(frames.shape())?;
        let tape = Tape::new();
        let p = self.params.attach_frozen(&tape);
        let ends: Vec<usize> = (0..n).collect();
        Ok(self.forward_windows(&p, tape.constant(frames.clone()), &ends)?.value().into_vec())
    }

    /// Features of the window ending at the last frame of `frames`.
    pub fn encode(&self, frames: &Tensor) -> Result<Tensor> {
        let n = self.check_frames(frames.shape())?;
        let tape = Tape::new();
        let p = self.params.attach_frozen(&tape);
        let f = self.encode_windows(&p, tape.constant(frames.clone()), &[n - 1])?.value();
        let len = f.len();
        Ok(f.reshape(&[len])?)
    }

    /// Dense head on one feature vector.
    pub fn head_value(&self, feature: &Tensor) -> Result<f64> {
        let want = self.arch.feature_len()?;
        if feature.len() != want {
            return Err(TensorError::Dimension(format!("feature length {} != {want}", feature.len())).into());
        }
        let tape = Tape::new();
        let p = self.params.attach_frozen(&tape);
        let f = tape.constant(feature.reshape(&[1, want])?);
        Ok(self.head(&p, f)?.value().item()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::check_gradients;

    fn tiny() -> SteeringArch {
        let conv = |out_channels, kernel, stride, padding| ConvLayerSpec { out_channels, kernel, stride, padding };
        SteeringArch {
            window: 4,
            channels: 3,
            height: 8,
            width: 8,
            convs: vec![conv(4, [1, 3, 3], [1, 2, 2], [0, 1, 1]), conv(3, [2, 3, 3], [2, 2, 2], [0, 1, 1])],
            hidden: vec![5],
            activation: Activation::Tanh,
            encoder_split: None,
        }
    }

    #[test]
    fn window_indices_pad_with_first_frame() {
        assert_eq!(window_indices(0, 3), vec![0, 0, 0]);
        assert_eq!(window_indices(1, 3), vec![0, 0, 1]);
        assert_eq!(window_indices(5, 3), vec![3, 4, 5]);
    }

    #[test]
    fn default_feature_length() {
        assert_eq!(SteeringArch::default().feature_len().unwrap(), 8 * 5 * 4 * 4);
    }

    #[test]
    fn shared_prefix_matches_explicit_windows() {
        let m = SteeringModel::new(tiny(), 3).unwrap();
        let mut rng = seeded_rng(8);
        let frames = Tensor::uniform(&[6, 3, 8, 8], 0.0, 1.0, &mut rng);
        let fast = m.predict_frames(&frames).unwrap();
        for (e, got) in fast.iter().enumerate() {
            let tape = Tape::new();
            let p = m.params().attach_frozen(&tape);
            let idx = window_indices(e, 4);
            let w = tape.constant(frames.clone()).index_select(0, &idx).unwrap();
            let v = SteeringModel::volume(w).unwrap();
            let want = m.forward_volume(&p, v).unwrap().value().item().unwrap();
            assert!((got - want).abs() <= 1e-12, "{e}: {got} vs {want}");
        }
    }

    #[test]
    fn split_consistency_is_exact() {
        let mut rng = seeded_rng(9);
        let frames = Tensor::uniform(&[4, 3, 8, 8], 0.0, 1.0, &mut rng);
        for split in 1..4 {
            let m = SteeringModel::new(SteeringArch { encoder_split: Some(split), ..tiny() }, 1).unwrap();
            let f = m.encode(&frames).unwrap();
            assert_eq!(f.len(), m.arch().feature_len().unwrap());
            assert_eq!(m.head_value(&f).unwrap(), *m.predict_frames(&frames).unwrap().last().unwrap());
        }
        assert!(SteeringModel::new(SteeringArch { encoder_split: Some(4), ..tiny() }, 1).is_err());
        assert!(SteeringModel::new(SteeringArch { encoder_split: Some(0), ..tiny() }, 1).is_err());
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = SteeringModel::new(tiny(), 2).unwrap();
        let z = SteeringModel::from_params(tiny(), m.params().map(|_| 0.0)).unwrap();
        let mut rng = seeded_rng(1);
        let frames = Tensor::uniform(&[5, 3, 8, 8], 0.0, 1.0, &mut rng);
        assert!(z.predict_frames(&frames).unwrap().iter().all(|v| *v == 0.0));
        let zero_bias = m.clone();
        assert!(zero_bias.encode(&Tensor::zeros(&[4, 3, 8, 8])).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn geometry_mismatch_is_dimension_error() {
        let m = SteeringModel::new(tiny(), 2).unwrap();
        let r = m.predict_frames(&Tensor::zeros(&[4, 3, 8, 9]));
        assert!(matches!(r, Err(NetsError::Tensor(TensorError::Dimension(_)))));
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let m = SteeringModel::new(tiny(), 4).unwrap();
        let mut rng = seeded_rng(5);
        let frames = Tensor::uniform(&[5, 3, 8, 8], 0.0, 1.0, &mut rng);
        let r = check_gradients(
            m.params().tensors(),
            |tape, p| Ok(m.forward_windows(p, tape.constant(frames.clone()), &[1, 3, 4]).unwrap().square().sum()),
            1e-5,
            12,
            3,
        )
        .unwrap();
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
    }
}
