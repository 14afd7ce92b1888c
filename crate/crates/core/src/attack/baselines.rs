//! Reference attacks: full-frame FGSM, sign-restricted FGSM, direct pixel optimization and noise.

use rand::Rng;

use super::{adv_loss_var, with_frozen_target, AttackConfig, AttackError, LossRecord, Result};
use crate::nets::{window_indices, LossKind, SteeringModel};
use crate::scene::VideoSlice;
use crate::tensor::{adam_step, derive_seed, seeded_rng, AdamConfig, AdamState, Tape, Tensor, TensorError};
use crate::warp::{interior_mask, rectify, SubstitutionPlan};

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(AttackError::Config(format!("epsilon must be non-negative, got {eps}")));
    }
    Ok(())
}

fn sign_of(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Index of the frame the single-frame baselines work on.
pub fn middle_frame(slice: &VideoSlice) -> usize {
    slice.len() / 2
}

/// The middle frame's quad rectified to `hw`.
pub fn middle_patch(slice: &VideoSlice, hw: (usize, usize)) -> Result<Tensor> {
    let m = middle_frame(slice);
    Ok(rectify(&slice.frame(m)?, &slice.quads[m], hw)?)
}

/// One signed gradient step on every frame against the ground-truth angles.
///
/// The loss sums over all sliding windows, so each frame receives the combined gradient of
/// every window it appears in. Nothing restricts the perturbation to the sign.
pub fn fgsm_full_frame(slice: &VideoSlice, model: &SteeringModel, eps: f64, lf: LossKind) -> Result<VideoSlice> {
    check_eps(eps)?;
    if eps == 0.0 {
        return Ok(slice.clone());
    }
    let grad = with_frozen_target(model, || {
        let tape = Tape::new();
        let p = model.params().attach_frozen(&tape);
        let x = tape.param(slice.frames.clone());
        let ends: Vec<usize> = (0..slice.len()).collect();
        let pred = model.forward_windows(&p, x, &ends)?;
        let loss = lf.apply(pred, tape.constant(Tensor::from_slice(&slice.angles)))?;
        Ok(tape.backward(loss)?.wrt(x)?.clone())
    })?;
    let out = slice.frames.zip_map(&grad, |x, g| (x + eps * sign_of(g)).clamp(0.0, 1.0))?;
    Ok(slice.with_frames(out)?)
}

/// FGSM on the middle frame's sign pixels, rectified back into a sign of `sign_hw`.
pub fn phys_fgsm(
    slice: &VideoSlice,
    model: &SteeringModel,
    eps: f64,
    lf: LossKind,
    sign_hw: (usize, usize),
) -> Result<Tensor> {
    check_eps(eps)?;
    let m = middle_frame(slice);
    let [c, h, w] = slice.frame_shape();
    let frame = slice.frame(m)?;
    if eps == 0.0 {
        return middle_patch(slice, sign_hw);
    }
    let grad = with_frozen_target(model, || {
        let tape = Tape::new();
        let p = model.params().attach_frozen(&tape);
        let x = tape.param(slice.frames.clone());
        let pred = model.forward_windows(&p, x, &[m])?;
        let target = tape.constant(Tensor::from_slice(&slice.angles[m..=m]));
        let loss = lf.apply(pred, target)?;
        Ok(tape.backward(loss)?.wrt(x)?.index0(m)?)
    })?;
    let mask = interior_mask(&slice.quads[m], (h, w));
    let mut data = frame.to_vec();
    for ch in 0..c {
        for (k, &inside) in mask.iter().enumerate() {
            if inside {
                let i = ch * h * w + k;
                data[i] = (data[i] + eps * sign_of(grad.data()[i])).clamp(0.0, 1.0);
            }
        }
    }
    let perturbed = Tensor::new(&[c, h, w], data)?;
    Ok(rectify(&perturbed, &slice.quads[m], sign_hw)?)
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

/// Optimizes sign pixels directly with Adam against the window ending at the middle frame.
///
/// The sign is `sigmoid(w)` with `w` initialized from the rectified original patch, and it is
/// pasted into every frame of that window before the model sees it.
pub fn rp2_regression(
    slice: &VideoSlice,
    model: &SteeringModel,
    cfg: &AttackConfig,
    sign_hw: (usize, usize),
) -> Result<(Tensor, Vec<LossRecord>)> {
    cfg.validate()?;
    let m = middle_frame(slice);
    let init = middle_patch(slice, sign_hw)?;
    let mut w = vec![init.map(logit)];
    let idx = window_indices(m, model.window());
    let frames = Tensor::stack(&idx.iter().map(|&k| slice.frame(k)).collect::<Result<Vec<_>, _>>()?)?;
    let quads: Vec<_> = idx.iter().map(|&k| slice.quads[k]).collect();
    let plan = SubstitutionPlan::new(slice.frame_shape(), sign_hw, &quads)?;
    let pred_orig = model.predict_frames(&slice.frames)?;
    let reference = Tensor::from_slice(&[cfg.reference.angles(slice, &pred_orig)[m]]);
    let adam = AdamConfig::with_lr(cfg.rp2_lr);
    let mut state = AdamState::new(&w);
    let mut history = Vec::with_capacity(cfg.iterations);
    with_frozen_target(model, || {
        for it in 0..cfg.iterations {
            let tape = Tape::new();
            let p = model.params().attach_frozen(&tape);
            let wv = tape.param(w[0].clone());
            let window = plan.apply_var(&frames, wv.sigmoid())?;
            let pred = model.forward_windows(&p, window, &[idx.len() - 1])?;
            let loss = adv_loss_var(tape.constant(reference.clone()), pred, cfg.beta, cfg.loss)?;
            let l = loss.value().item()?;
            if !l.is_finite() {
                return Err(TensorError::Numeric(format!("rp2 loss became {l} at iteration {it}")).into());
            }
            history.push(LossRecord {
                iteration: it,
                l_gan_d: f64::NAN,
                l_gan_g: f64::NAN,
                l_adv: l,
                d_fake: f64::NAN,
                d_real_median: f64::NAN,
            });
            let g = tape.backward(loss)?.wrt(wv)?.clone();
            adam_step(&mut w, &[g], &mut state, &adam)?;
        }
        Ok(())
    })?;
    let sign = w[0].map(crate::tensor::sigmoid);
    Ok((sign, history))
}

/// `clamp(patch + U(-eps, eps), 0, 1)`.
pub fn random_noise_sign(patch: &Tensor, eps: f64, seed: u64) -> Result<Tensor> {
    check_eps(eps)?;
    if eps == 0.0 {
        return Ok(patch.clone());
    }
    let mut rng = seeded_rng(derive_seed(seed, "noise-sign"));
    let data = patch.data();
    Ok(Tensor::from_fn(patch.shape(), |i| (data[i] + rng.random_range(-eps..=eps)).clamp(0.0, 1.0)))
}
