//! Adversarial and GAN objectives.

use super::{AttackError, Result};
use crate::nets::LossKind;
use crate::tensor::{TensorError, Var};

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(AttackError::Config(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

/// `beta * exp(-l_f(pred_orig, pred_adv) / beta)`.
pub fn adv_loss(pred_orig: &[f64], pred_adv: &[f64], beta: f64, lf: LossKind) -> Result<f64> {
    check_beta(beta)?;
    if pred_orig.len() != pred_adv.len() || pred_orig.is_empty() {
        return Err(TensorError::Dimension(format!(
            "adv_loss needs equal non-empty inputs, got {} and {}",
            pred_orig.len(),
            pred_adv.len()
        ))
        .into());
    }
    if pred_orig.iter().chain(pred_adv).any(|v| !v.is_finite()) {
        return Err(TensorError::Numeric("adv_loss input is not finite".into()).into());
    }
    Ok(beta * (-lf.eval(pred_orig, pred_adv) / beta).exp())
}

/// Tape version of [`adv_loss`].
pub fn adv_loss_var<'t>(pred_orig: Var<'t>, pred_adv: Var<'t>, beta: f64, lf: LossKind) -> Result<Var<'t>> {
    check_beta(beta)?;
    Ok(lf.apply(pred_orig, pred_adv)?.scale(-1.0 / beta).exp()?.scale(beta))
}

fn open_unit(v: f64, what: &str) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(TensorError::Numeric(format!("{what} = {v} is outside (0, 1)")).into());
    }
    Ok(())
}

/// `log(d_real) + log(1 - d_fake)`.
pub fn gan_loss(d_real: f64, d_fake: f64) -> Result<f64> {
    open_unit(d_real, "d_real")?;
    open_unit(d_fake, "d_fake")?;
    Ok(d_real.ln() + (1.0 - d_fake).ln())
}

/// Batched estimate `mean(log d_real) + mean(log(1 - d_fake))` on the tape.
pub fn gan_loss_var<'t>(d_real: Var<'t>, d_fake: Var<'t>) -> Result<Var<'t>> {
    let real = d_real.log()?.mean();
    let fake = d_fake.neg().add_scalar(1.0).log()?.mean();
    Ok(real.add(fake)?)
}

/// `gan + lambda * adv`.
pub fn total_loss(gan: f64, adv: f64, lambda: f64) -> f64 {
    gan + lambda * adv
}
