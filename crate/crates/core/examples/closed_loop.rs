//! Drives the default scene with fixed steering and with a trained model, printing
//! the lateral trajectory.
//!
//! cargo run --release --example closed_loop -- [model.pgt] [horizon_s]

use std::path::Path;

use physgan_lab::eval::{closed_loop_sim, ConstantSteering, SimConfig, SimOutcome};
use physgan_lab::nets::{ParamSet, SteeringArch, SteeringModel};
use physgan_lab::scene::SceneConfig;

fn show(name: &str, out: &SimOutcome) {
    let curb = out.time_to_curb_s.map_or("never".into(), |t| format!("{t:.2} s"));
    println!("{name}: curb {curb}, max offset {:.3} m", out.distance_to_center_m);
    let every = (out.trajectory.len() / 8).max(1);
    for s in out.trajectory.iter().step_by(every) {
        println!(
            "  t {:>5.2}  lateral {:>7.3}  heading {:>7.3} deg",
            s.time_s,
            s.lateral_m,
            s.heading_rad.to_degrees()
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let horizon: Option<f64> = args.get(2).map(|s| s.parse()).transpose()?;
    let scene = SceneConfig::default();
    let sign = scene.sign.load()?;
    let sim = SimConfig { horizon_s: horizon, ..SimConfig::default() };

    for delta in [0.0, 2.0, 10.0] {
        show(&format!("constant {delta} deg"), &closed_loop_sim(&mut ConstantSteering(delta), &scene, &sign, &sim)?);
    }
    if let Some(path) = args.get(1) {
        let model = SteeringModel::from_params(SteeringArch::default(), ParamSet::load(Path::new(path))?)?;
        show("model", &closed_loop_sim(&mut &model, &scene, &sign, &sim)?);
    }
    Ok(())
}
