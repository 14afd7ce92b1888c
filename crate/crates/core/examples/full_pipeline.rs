//! Scenes, training, attacks, evaluation and the report in one process, using a
//! shortened configuration unless a config file is given.
//!
//! cargo run --release --example full_pipeline -- [config.toml] [out_dir]

use std::path::{Path, PathBuf};

use physgan_lab::cli::{self, ExperimentConfig, Selection};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let cfg = match args.get(1) {
        Some(p) => ExperimentConfig::load(Path::new(p))?,
        None => {
            let mut c = ExperimentConfig::default();
            c.scenes.truncate(3);
            c.attack.seeds = vec![0];
            c.attack.config.iterations = 100;
            c.train.config.epochs = 5;
            c
        }
    };
    let out = args.get(2).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("target/full_pipeline"));
    let sel = Selection { jobs: 2, ..Selection::all(&cfg) };

    let scenes = cli::cmd_gen_scenes(&cfg, &out, sel.jobs)?;
    println!("{} scenes", scenes.len());
    let (_, train) = cli::cmd_train(&cfg, &out)?;
    println!("validation MSE {:.4} deg^2", train.validation_mse);
    let arts = cli::cmd_attack(&cfg, &out, &sel)?;
    println!("{} attack runs", arts.len());
    cli::cmd_eval(&cfg, &out, &sel)?;
    print!("{}", cli::format_report(&cli::cmd_report(&cfg, &out)?));
    println!("outputs in {}", out.display());
    Ok(())
}
