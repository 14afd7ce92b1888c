//! Runs the non-generative baselines on the default scene and prints slice-wide errors.
//!
//! cargo run --release --example baselines -- <model.pgt> [epsilon]

use std::path::Path;

use physgan_lab::attack::{fgsm_full_frame, middle_patch, phys_fgsm, random_noise_sign, rp2_regression, AttackConfig};
use physgan_lab::nets::{LossKind, ParamSet, SteeringArch, SteeringModel};
use physgan_lab::scene::{render_scene, substitute_slice, SceneConfig, VideoSlice};

fn report(
    name: &str,
    model: &SteeringModel,
    slice: &VideoSlice,
    adv: &VideoSlice,
) -> Result<(), Box<dyn std::error::Error>> {
    let pred = model.predict_frames(&adv.frames)?;
    let err: Vec<f64> = pred.iter().zip(&slice.angles).map(|(p, y)| p - y).collect();
    let mse = err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64;
    let msae = err.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    println!("{name:<9} mse {mse:>8.3}  msae {msae:>7.3}");
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).ok_or("usage: baselines <model.pgt> [epsilon]")?;
    let eps: f64 = std::env::args().nth(2).map(|s| s.parse()).transpose()?.unwrap_or(8.0 / 255.0);
    let model = SteeringModel::from_params(SteeringArch::default(), ParamSet::load(Path::new(&path))?)?;
    let scene = SceneConfig::default();
    let sign = scene.sign.load()?;
    let slice = render_scene(&scene, &sign)?;
    let hw = (sign.shape()[1], sign.shape()[2]);

    report("original", &model, &slice, &slice)?;
    let noisy = random_noise_sign(&middle_patch(&slice, hw)?, eps, 0)?;
    report("noise", &model, &slice, &substitute_slice(&slice, &noisy)?)?;
    report("fgsm", &model, &slice, &fgsm_full_frame(&slice, &model, eps, LossKind::Mse)?)?;
    let pf = phys_fgsm(&slice, &model, eps, LossKind::Mse, hw)?;
    report("physfgsm", &model, &slice, &substitute_slice(&slice, &pf)?)?;
    let (rp2, hist) = rp2_regression(&slice, &model, &AttackConfig { iterations: 200, ..AttackConfig::default() }, hw)?;
    report("rp2", &model, &slice, &substitute_slice(&slice, &rp2)?)?;
    println!("rp2 ran {} steps", hist.len());
    Ok(())
}
