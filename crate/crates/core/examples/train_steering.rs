//! Trains the default 3D-CNN steering model on a synthetic scene family and
//! reports train and validation MSE.
//!
//! cargo run --release --example train_steering -- [scenes] [epochs] [out.pgt]

use std::time::Instant;

use physgan_lab::nets::{evaluate_mse, train_steering, SteeringArch, SteeringModel, TrainConfig};
use physgan_lab::scene::{render_scene, scene_family};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let count: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let epochs: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(TrainConfig::default().epochs);
    let slices =
        scene_family(count, 0).iter().map(|cfg| render_scene(cfg, &cfg.sign.load()?)).collect::<Result<Vec<_>, _>>()?;
    let split = count * 4 / 5;
    let (train, val) = slices.split_at(split);
    let model = SteeringModel::new(SteeringArch::default(), 0)?;
    let start = Instant::now();
    let out = train_steering(model, train, &TrainConfig { epochs, ..TrainConfig::default() })?;
    for (e, l) in out.train_loss.iter().enumerate().filter(|(e, _)| e % 10 == 9 || *e == 0) {
        println!("epoch {:3}: train loss {l:.4}", e + 1);
    }
    println!(
        "{} epochs in {:.1}s; train MSE {:.4} deg^2, validation MSE {:.4} deg^2",
        epochs,
        start.elapsed().as_secs_f64(),
        evaluate_mse(&out.model, train)?,
        evaluate_mse(&out.model, val)?
    );
    if let Some(path) = args.get(3) {
        out.model.params().save(std::path::Path::new(path))?;
        println!("checkpoint written to {path}");
    }
    Ok(())
}
