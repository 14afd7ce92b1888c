//! Attacks one scene with every approach and prints slice-wide errors against ground
//! truth, then drives the scene closed-loop with each resulting sign.
//!
//! cargo run --release --example physgan_attack -- <model.pgt> [iterations] [seed] [radius_m]

use std::path::Path;
use std::time::Instant;

use physgan_lab::attack::{run_attack, Approach, AttackConfig};
use physgan_lab::eval::{closed_loop_sim, SimConfig};
use physgan_lab::nets::{ParamSet, SteeringArch, SteeringModel};
use physgan_lab::scene::{render_scene, SceneConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).ok_or("usage: physgan_attack <model.pgt> [iterations] [seed] [radius_m]")?;
    let iterations: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(500);
    let seed: u64 = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let radius: f64 = args.get(4).map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    let model = SteeringModel::from_params(SteeringArch::default(), ParamSet::load(Path::new(path))?)?;
    let scene = if radius == 0.0 { SceneConfig::default() } else { SceneConfig::curve("curve", radius) };
    let sign = scene.sign.load()?;
    let slice = render_scene(&scene, &sign)?;
    // Extra settings as inline TOML, e.g. ATTACK_CFG='lr_g = 0.01'.
    let base: AttackConfig = toml::from_str(&std::env::var("ATTACK_CFG").unwrap_or_default())?;
    let cfg = AttackConfig { iterations, seed, ..base };
    let only = std::env::var("APPROACHES").ok();
    let sim_cfg = SimConfig {
        horizon_s: std::env::var("SIM_HORIZON").ok().map(|h| h.parse()).transpose()?,
        ..SimConfig::default()
    };
    println!(
        "{:<9} {:>9} {:>8} {:>8} {:>8} {:>7} {:>6} {:>6}",
        "approach", "mse", "msae", "early", "late", "secs", "curb", "dist"
    );
    for approach in Approach::ALL {
        if only.as_deref().is_some_and(|o| !o.split(',').any(|a| a == approach.name())) {
            continue;
        }
        let start = Instant::now();
        let art = run_attack(approach, &slice, &model, &sign, &cfg)?;
        let err: Vec<f64> = art.pred_adv.iter().zip(&slice.angles).map(|(p, y)| p - y).collect();
        let mse = err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64;
        let msae = err.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let half = err.len() / 2;
        let early = err[..half].iter().map(|e| e.abs()).sum::<f64>() / half as f64;
        let late = err[half..].iter().map(|e| e.abs()).sum::<f64>() / (err.len() - half) as f64;
        let secs = start.elapsed().as_secs_f64();
        let (curb, dist) = if approach.is_physical() {
            let sim = closed_loop_sim(&mut &model, &scene, &art.sign, &sim_cfg)?;
            (sim.time_to_curb_s.map_or("-".into(), |t| format!("{t:.2}")), format!("{:.3}", sim.distance_to_center_m))
        } else {
            ("n/a".into(), "n/a".into())
        };
        println!(
            "{:<9} {mse:>9.3} {msae:>8.3} {early:>8.3} {late:>8.3} {secs:>7.1} {curb:>6} {dist:>6}",
            approach.name()
        );
        if let Some(last) = art.history.last() {
            println!("          selected {:?}, final l_adv {:.3}", art.selected_iteration, last.l_adv);
        }
        if let Ok(dir) = std::env::var("ATTACK_OUT") {
            art.save(&Path::new(&dir).join(approach.name()))?;
        }
    }
    Ok(())
}
