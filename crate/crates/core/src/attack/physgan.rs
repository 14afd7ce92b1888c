//! Alternating generator / discriminator optimization against a frozen steering model.

use super::{
    adv_loss_var, gan_loss_var, with_frozen_target, AttackArtifacts, AttackConfig, AttackError, LossRecord, Result,
};
use crate::nets::{Discriminator, DiscriminatorArch, Generator, GeneratorArch, SteeringModel};
use crate::scene::{augment_image, substitute_slice, substitution_plan, VideoSlice};
use crate::tensor::{adam_step, derive_seed, seeded_rng, AdamConfig, AdamState, Tape, Tensor};

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn sample(g: &Generator, z: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let p = g.params().attach_frozen(&tape);
    Ok(g.forward(&p, tape.constant(z.clone()))?.value())
}

fn check_finite(iteration: usize, values: &[f64], partial: impl FnOnce() -> AttackArtifacts) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AttackError::NonFinite { iteration, partial: Box::new(partial()) })
    }
}

/// Builds a generator and discriminator sized for `model` and `original_sign`, then trains them.
pub fn physgan_attack(
    slice: &VideoSlice,
    model: &SteeringModel,
    original_sign: &Tensor,
    cfg: &AttackConfig,
) -> Result<(AttackArtifacts, Generator, Discriminator)> {
    let s = original_sign.shape();
    if s.len() != 3 || s[1] != s[2] {
        return Err(AttackError::Config(format!("sign must be square [c, s, s], got {s:?}")));
    }
    let garch = GeneratorArch { feature_len: model.arch().feature_len()?, ..GeneratorArch::default() };
    if garch.sign_shape() != [s[0], s[1], s[2]] {
        return Err(AttackError::Config(format!(
            "generator emits {:?} but the original sign is {s:?}",
            garch.sign_shape()
        )));
    }
    let darch = DiscriminatorArch { channels: s[0], size: s[1], ..DiscriminatorArch::default() };
    let mut g = Generator::new(garch, derive_seed(cfg.seed, "generator"))?;
    let mut d = Discriminator::new(darch, derive_seed(cfg.seed, "discriminator"))?;
    let art = train_physgan(slice, model, original_sign, &mut g, &mut d, cfg)?;
    Ok((art, g, d))
}

/// Trains `g` and `d` in place and returns the selected adversarial sign.
///
/// Real samples for `d` are colour-jittered copies of `original_sign`. The kept sign is the
/// iterate with the lowest adversarial loss among those `d` scored at least as high as the
/// median real sample; if none qualifies, the final generator output is used.
pub fn train_physgan(
    slice: &VideoSlice,
    model: &SteeringModel,
    original_sign: &Tensor,
    g: &mut Generator,
    d: &mut Discriminator,
    cfg: &AttackConfig,
) -> Result<AttackArtifacts> {
    cfg.validate()?;
    with_frozen_target(model, || run(slice, model, original_sign, g, d, cfg))
}

fn run(
    slice: &VideoSlice,
    model: &SteeringModel,
    original_sign: &Tensor,
    g: &mut Generator,
    d: &mut Discriminator,
    cfg: &AttackConfig,
) -> Result<AttackArtifacts> {
    if original_sign.shape() != g.arch().sign_shape() {
        return Err(AttackError::Config(format!(
            "generator emits {:?}, original sign is {:?}",
            g.arch().sign_shape(),
            original_sign.shape()
        )));
    }
    let plan = substitution_plan(slice, original_sign)?;
    let pred_orig = model.predict_frames(&slice.frames)?;
    let reference = Tensor::from_slice(&cfg.reference.angles(slice, &pred_orig));
    let ends: Vec<usize> = (0..slice.len()).collect();
    let z = g.condition(&model.encode(&slice.frames)?)?;
    let checksum = model.params().checksum();
    let sign_shape = original_sign.shape().to_vec();
    let batch_shape = [1, sign_shape[0], sign_shape[1], sign_shape[2]];

    let mut rng = seeded_rng(derive_seed(cfg.seed, "physgan-real"));
    let mut real_batch = || -> Result<Tensor> {
        let items: Vec<Tensor> =
            (0..cfg.real_batch).map(|_| augment_image(original_sign, &mut rng, cfg.real_jitter)).collect();
        Ok(Tensor::stack(&items)?)
    };

    let adam_g = AdamConfig::with_lr(cfg.lr_g);
    let adam_d = AdamConfig::with_lr(cfg.lr_d);
    let mut state_g = AdamState::new(g.params().tensors());
    let mut state_d = AdamState::new(d.params().tensors());
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut best: Option<(f64, usize, Tensor)> = None;

    let partial = |history: &[LossRecord], sign: Tensor| AttackArtifacts {
        approach: "physgan".into(),
        sign,
        history: history.to_vec(),
        pred_orig: pred_orig.clone(),
        pred_adv: Vec::new(),
        adv_frames: None,
        selected_iteration: None,
        config: cfg.clone(),
        seed: cfg.seed,
        model_checksum: checksum.clone(),
    };

    for it in 0..cfg.iterations {
        // Discriminator ascent with the generator held fixed.
        let mut l_gan_d = f64::NAN;
        for _ in 0..cfg.d_steps {
            let fake = sample(g, &z)?.reshape(&batch_shape)?;
            let tape = Tape::new();
            let p = d.params().attach(&tape);
            let d_real = d.forward(&p, tape.constant(real_batch()?))?;
            let d_fake = d.forward(&p, tape.constant(fake.clone()))?;
            let l = gan_loss_var(d_real, d_fake)?;
            l_gan_d = l.value().item()?;
            check_finite(it, &[l_gan_d], || partial(&history, fake.reshape(&sign_shape).unwrap_or(fake.clone())))?;
            let grads = tape.backward(l.neg())?;
            let gd: Vec<Tensor> = p.iter().map(|v| grads.wrt(*v).cloned()).collect::<Result<_, _>>()?;
            adam_step(d.params_mut().tensors_mut(), &gd, &mut state_d, &adam_d)?;
        }

        // Generator descent on the combined objective with the discriminator held fixed.
        let (mut l_gan_g, mut l_adv, mut d_fake_score, mut real_median) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        let mut candidate = None;
        for _ in 0..cfg.g_steps {
            let tape = Tape::new();
            let pg = g.params().attach(&tape);
            let pd = d.params().attach_frozen(&tape);
            let pm = model.params().attach_frozen(&tape);
            let sign = g.forward(&pg, tape.constant(z.clone()))?;
            let adv_frames = plan.apply_var(&slice.frames, sign)?;
            let pred = model.forward_windows(&pm, adv_frames, &ends)?;
            let adv = adv_loss_var(tape.constant(reference.clone()), pred, cfg.beta, cfg.loss)?;
            let d_real = d.forward(&pd, tape.constant(real_batch()?))?;
            let d_fake = d.forward(&pd, sign.reshape(&batch_shape)?)?;
            let gan = gan_loss_var(d_real, d_fake)?;
            let total = gan.add(adv.scale(cfg.lambda))?;
            l_gan_g = gan.value().item()?;
            l_adv = adv.value().item()?;
            d_fake_score = d_fake.value().item()?;
            real_median = median(d_real.value().data());
            let sign_value = sign.value();
            check_finite(it, &[l_gan_g, l_adv, total.value().item()?], || partial(&history, sign_value.clone()))?;
            candidate = Some(sign_value);
            let grads = tape.backward(total)?;
            let gg: Vec<Tensor> = pg.iter().map(|v| grads.wrt(*v).cloned()).collect::<Result<_, _>>()?;
            adam_step(g.params_mut().tensors_mut(), &gg, &mut state_g, &adam_g)?;
        }

        if let Some(sign) = candidate {
            let plausible = d_fake_score >= real_median;
            if plausible && best.as_ref().is_none_or(|(l, _, _)| l_adv < *l) {
                best = Some((l_adv, it, sign));
            }
        }
        history.push(LossRecord {
            iteration: it,
            l_gan_d,
            l_gan_g,
            l_adv,
            d_fake: d_fake_score,
            d_real_median: real_median,
        });
        if it % 50 == 0 || it + 1 == cfg.iterations {
            log::debug!(
                "physgan it {it}: l_gan_d {l_gan_d:.4} l_gan_g {l_gan_g:.4} l_adv {l_adv:.4} d_fake {d_fake_score:.3}"
            );
        }
    }

    let (sign, selected) = match best {
        Some((_, it, s)) => (s, Some(it)),
        None => (sample(g, &z)?, None),
    };
    let pred_adv = model.predict_frames(&substitute_slice(slice, &sign)?.frames)?;
    if model.params().checksum() != checksum {
        return Err(AttackError::TargetModified { before: checksum, after: model.params().checksum() });
    }
    Ok(AttackArtifacts {
        approach: "physgan".into(),
        sign,
        history,
        pred_orig,
        pred_adv,
        adv_frames: None,
        selected_iteration: selected,
        config: cfg.clone(),
        seed: cfg.seed,
        model_checksum: checksum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{ConvLayerSpec, SteeringArch};
    use crate::scene::{builtin_sign, render_scene, Logo, SceneConfig};

    fn small_model() -> SteeringModel {
        let arch = SteeringArch {
            convs: vec![ConvLayerSpec { out_channels: 4, kernel: [1, 8, 8], stride: [1, 8, 8], padding: [0, 0, 0] }],
            hidden: vec![4],
            ..SteeringArch::default()
        };
        SteeringModel::new(arch, 3).unwrap()
    }

    #[test]
    fn deterministic_and_frozen() {
        let slice = render_scene(&SceneConfig::default(), &builtin_sign(Logo::Orchard)).unwrap();
        let model = small_model();
        let before = model.params().checksum();
        let cfg = AttackConfig { iterations: 3, ..Default::default() };
        let sign = builtin_sign(Logo::Orchard);
        let (a, _, _) = physgan_attack(&slice, &model, &sign, &cfg).unwrap();
        let (b, _, _) = physgan_attack(&slice, &model, &sign, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.sign, b.sign);
        assert_eq!(a.history.len(), 3);
        assert_eq!(model.params().checksum(), before);
        assert_eq!(a.model_checksum, before);
        assert!(a.sign.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.sign.shape(), sign.shape());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
