use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{NetsError, Result, SteeringModel};
use crate::scene::{color_augment, VideoSlice};
use crate::tensor::{adam_step, derive_seed, seeded_rng, AdamConfig, AdamState, Tape, TensorError, Var};

/// Distance between two angle vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
    L1,
}

impl LossKind {
    /// Mean squared or mean absolute difference, on the tape.
    pub fn apply<'t>(&self, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>, TensorError> {
        let d = a.sub(b)?;
        Ok(match self {
            LossKind::Mse => d.square().mean(),
            LossKind::L1 => d.abs().mean(),
        })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().max(1) as f64;
        a.iter()
            .zip(b)
            .map(|(x, y)| match self {
                LossKind::Mse => (x - y).powi(2),
                LossKind::L1 => (x - y).abs(),
            })
            .sum::<f64>()
            / n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Frames per window; must match the model.
    pub window: usize,
    /// Colour augmentation strength applied to each slice per step.
    pub augment: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 2e-3, epochs: 15, seed: 0, loss: LossKind::Mse, window: 20, augment: 0.2 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(NetsError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.window == 0 {
            return Err(NetsError::Config("window must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.augment) {
            return Err(NetsError::Config(format!("augmentation strength {} outside [0, 1]", self.augment)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SteeringModel,
    /// Mean training loss per epoch, measured before each step's update.
    pub train_loss: Vec<f64>,
}

/// Fits `model` to per-frame angles with Adam, one slice per step.
pub fn train_steering(model: SteeringModel, data: &[VideoSlice], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NetsError::Config("training set is empty".into()));
    }
    if cfg.window != model.window() {
        return Err(NetsError::Config(format!("train window {} != model window {}", cfg.window, model.window())));
    }
    let shape = data[0].frames.shape().to_vec();
    if let Some(bad) = data.iter().find(|s| s.frames.shape()[1..] != shape[1..]) {
        return Err(
            TensorError::Dimension(format!("slice {} has frames {:?}", bad.meta.name, bad.frames.shape())).into()
        );
    }
    let mut model = model;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut state = AdamState::new(model.params().tensors());
    let mut rng = seeded_rng(derive_seed(cfg.seed, "train-order"));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &k in &order {
            let slice = if cfg.augment > 0.0 {
                color_augment(&data[k], derive_seed(cfg.seed, &format!("augment-{step}")), cfg.augment)
                    .map_err(|e| NetsError::Config(e.to_string()))?
            } else {
                data[k].clone()
            };
            step += 1;
            let tape = Tape::new();
            let p = model.params().attach(&tape);
            let ends: Vec<usize> = (0..slice.len()).collect();
            let pred = model.forward_windows(&p, tape.constant(slice.frames.clone()), &ends)?;
            let target = tape.constant(crate::tensor::Tensor::from_slice(&slice.angles));
            let loss = cfg.loss.apply(pred, target)?;
            let lv = loss.value().item()?;
            if !lv.is_finite() {
                return Err(NetsError::Diverged { epoch, msg: format!("loss {lv}"), last_good: Box::new(model) });
            }
            total += lv;
            let grads = tape.backward(loss)?;
            let g: Vec<_> = p.iter().map(|v| grads.wrt(*v).cloned()).collect::<Result<_, _>>()?;
            let before = model.clone();
            adam_step(model.params_mut().tensors_mut(), &g, &mut state, &adam)?;
            if !model.params().all_finite() {
                return Err(NetsError::Diverged {
                    epoch,
                    msg: "non-finite parameters".into(),
                    last_good: Box::new(before),
                });
            }
        }
        curve.push(total / data.len() as f64);
        log::debug!("epoch {epoch}: train loss {:.5}", curve[epoch]);
    }
    Ok(TrainOutcome { model, train_loss: curve })
}

/// Mean squared per-frame angle error over all slices.
pub fn evaluate_mse(model: &SteeringModel, data: &[VideoSlice]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in data {
        let pred = model.predict_frames(&s.frames)?;
        sum += pred.iter().zip(&s.angles).map(|(p, a)| (p - a).powi(2)).sum::<f64>();
        n += pred.len();
    }
    if n == 0 {
        return Err(NetsError::Config("no frames to evaluate".into()));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Activation, ConvLayerSpec, SteeringArch};
    use crate::scene::LaneType;
    use crate::scene::SliceMeta;
    use crate::tensor::Tensor;
    use crate::warp::Quad;

    fn toy_slice(angle: f64, seed: u64) -> VideoSlice {
        let mut rng = seeded_rng(seed);
        VideoSlice::new(
            Tensor::uniform(&[4, 3, 8, 8], 0.0, 1.0, &mut rng),
            vec![angle; 4],
            vec![Quad::rect(1.0, 1.0, 3.0, 3.0).unwrap(); 4],
            SliceMeta { name: "toy".into(), seed, lane: LaneType::Curve },
        )
        .unwrap()
    }

    fn arch() -> SteeringArch {
        SteeringArch {
            window: 4,
            height: 8,
            width: 8,
            convs: vec![ConvLayerSpec { out_channels: 4, kernel: [1, 3, 3], stride: [1, 2, 2], padding: [0, 1, 1] }],
            hidden: vec![6],
            activation: Activation::Tanh,
            ..SteeringArch::default()
        }
    }

    #[test]
    fn memorizes_one_slice_deterministically() {
        let cfg = TrainConfig { epochs: 300, window: 4, augment: 0.0, lr: 1e-2, ..Default::default() };
        let data = [toy_slice(2.4, 1)];
        let a = train_steering(SteeringModel::new(arch(), 0).unwrap(), &data, &cfg).unwrap();
        let b = train_steering(SteeringModel::new(arch(), 0).unwrap(), &data, &cfg).unwrap();
        assert_eq!(a.train_loss, b.train_loss);
        assert!(evaluate_mse(&a.model, &data).unwrap() < 1e-3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = SteeringModel::new(arch(), 0).unwrap();
        let cfg = TrainConfig { window: 4, ..Default::default() };
        assert!(train_steering(m.clone(), &[], &cfg).is_err());
        assert!(train_steering(m.clone(), &[toy_slice(0.0, 1)], &TrainConfig { lr: 0.0, ..cfg.clone() }).is_err());
        assert!(train_steering(m, &[toy_slice(0.0, 1)], &TrainConfig { window: 5, ..cfg }).is_err());
    }

    #[test]
    fn divergence_keeps_last_finite_model() {
        let m = SteeringModel::new(arch(), 0).unwrap();
        let cfg = TrainConfig { window: 4, augment: 0.0, lr: 1e300, epochs: 5, ..Default::default() };
        match train_steering(m, &[toy_slice(1e150, 2)], &cfg) {
            Err(NetsError::Diverged { last_good, .. }) => assert!(last_good.params().all_finite()),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.train_loss)),
        }
    }
}
