//! Adam optimizer over a flat list of parameter tensors.

use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TensorError::Dimension(format!(
            "adam: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].len() != p.len() {
            return Err(TensorError::Dimension(format!(
                "adam: param {i} has shape {:?}, grad {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let mut data = p.to_vec();
        for (j, (&gj, x)) in g.data().iter().zip(data.iter_mut()).enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            *x -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
        *p = Tensor::new(p.shape(), data)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::seeded_rng;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut rng = seeded_rng(0);
        let p0 = Tensor::uniform(&[3, 2], -1.0, 1.0, &mut rng);
        let mut params = vec![p0.clone()];
        let mut st = AdamState::new(&params);
        adam_step(&mut params, &[Tensor::zeros(&[3, 2])], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(params[0], p0);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        let g = Tensor::from_slice(&[0.5, -2.0, 1e-9]);
        let p0 = Tensor::from_slice(&[1.0, 1.0, 1.0]);
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let mut params = vec![p0];
        let mut st = AdamState::new(&params);
        adam_step(&mut params, std::slice::from_ref(&g), &mut st, &cfg).unwrap();
        // m̂ = g, v̂ = g², so the step is -lr·g/(|g| + eps).
        for (x, gj) in params[0].data().iter().zip(g.data()) {
            let want = 1.0 - 0.1 * gj / (gj.abs() + 1e-8);
            assert!((x - want).abs() < 1e-15, "{x} vs {want}");
        }
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut rng = seeded_rng(11);
            let mut params = vec![Tensor::uniform(&[4], -1.0, 1.0, &mut rng)];
            let mut st = AdamState::new(&params);
            for _ in 0..5 {
                let g = Tensor::uniform(&[4], -1.0, 1.0, &mut rng);
                adam_step(&mut params, &[g], &mut st, &AdamConfig::default()).unwrap();
            }
            params[0].data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = vec![Tensor::zeros(&[2])];
        let mut st = AdamState::new(&params);
        let err = adam_step(&mut params, &[Tensor::zeros(&[3])], &mut st, &AdamConfig::default());
        assert!(matches!(err, Err(TensorError::Dimension(_))));
    }
}
