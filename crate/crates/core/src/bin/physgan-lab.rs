use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use physgan_lab::attack::Approach;
use physgan_lab::cli::{self, ExperimentConfig, Selection};

/// Synthetic drive-by experiments with adversarial roadside signs.
///
/// Log verbosity follows PHYSGAN_LOG (error, warn, info, debug, trace); default is info.
#[derive(Parser)]
#[command(name = "physgan-lab", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(clap::Args)]
struct Runs {
    /// Restrict to one approach; repeatable.
    #[arg(long, value_parser = |s: &str| s.parse::<Approach>().map_err(|e| e.to_string()))]
    approach: Vec<Approach>,
    /// Restrict to one attack seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Render every configured scene and write the manifest.
    GenScenes(Common),
    /// Train the steering model on the seeded scene family.
    Train(Common),
    /// Run attacks on every scene.
    Attack {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        runs: Runs,
    },
    /// Score saved attacks, drive them closed-loop and write results.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        runs: Runs,
    },
    /// Aggregate the evaluation summary into a comparison table.
    Report(Common),
}

fn setup(c: &Common) -> Result<(ExperimentConfig, PathBuf), cli::CliError> {
    let cfg = ExperimentConfig::load(&c.config)?;
    let out = c.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn selection(cfg: &ExperimentConfig, c: &Common, r: &Runs) -> Selection {
    let mut sel = Selection::all(cfg);
    if !r.approach.is_empty() {
        sel.approaches = r.approach.clone();
    }
    if let Some(s) = r.seed {
        sel.seeds = vec![s];
    }
    sel.jobs = c.jobs;
    sel
}

fn run(args: Args) -> Result<(), cli::CliError> {
    match args.command {
        Command::GenScenes(c) => {
            let (cfg, out) = setup(&c)?;
            let rows = cli::cmd_gen_scenes(&cfg, &out, c.jobs)?;
            println!("{} scenes written to {}", rows.len(), out.join("scenes").display());
        }
        Command::Train(c) => {
            let (cfg, out) = setup(&c)?;
            let (_, r) = cli::cmd_train(&cfg, &out)?;
            println!(
                "train MSE {:.4} deg^2, validation MSE {:.4} deg^2, checksum {}",
                r.train_mse, r.validation_mse, r.checksum
            );
        }
        Command::Attack { common, runs } => {
            let (cfg, out) = setup(&common)?;
            let arts = cli::cmd_attack(&cfg, &out, &selection(&cfg, &common, &runs))?;
            println!("{} attack runs written to {}", arts.len(), out.join("attacks").display());
        }
        Command::Eval { common, runs } => {
            let (cfg, out) = setup(&common)?;
            let r = cli::cmd_eval(&cfg, &out, &selection(&cfg, &common, &runs))?;
            println!("{} runs evaluated; see {}", r.len(), out.join("eval").display());
        }
        Command::Report(c) => {
            let (cfg, out) = setup(&c)?;
            print!("{}", cli::format_report(&cli::cmd_report(&cfg, &out)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PHYSGAN_LOG", "info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
