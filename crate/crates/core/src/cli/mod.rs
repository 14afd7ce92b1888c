//! Config-driven pipeline behind the `physgan-lab` binary: scene generation, training,
//! attacks, evaluation and the comparison report.
//!
//! Everything lands under one output directory:
//!
//! ```text
//! config.snapshot.toml
//! scenes/manifest.csv, scenes/<scene>/...
//! model/steering.pgt, model/train.toml
//! attacks/<approach>/<scene>/seed-<k>/...
//! eval/results.csv, eval/summary.csv, eval/timelines/<scene>-seed-<k>.png
//! report.csv
//! ```

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attack::{run_attack, Approach, AttackArtifacts, AttackError};
use crate::eval::{
    closed_loop_sim, error_timeline, msae, plot_timelines, steering_mse, write_results_csv, write_summary_csv,
    ErrorSeries, EvalError, SummaryRow,
};
use crate::nets::{evaluate_mse, train_steering, NetsError, ParamSet, SteeringModel};
use crate::scene::{
    load_slice, render_scene, save_slice, scene_family, substitute_slice, SceneConfig, SceneError, VideoSlice,
};

pub use config::{AttackSettings, EvalSettings, ExperimentConfig, TrainSettings, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing {what}: {}", path.display())]
    Missing { what: &'static str, path: PathBuf },
    #[error("{0}")]
    Usage(String),
    #[error("config {}: {msg}", path.display())]
    Config { path: PathBuf, msg: String },
    #[error("io error on {}: {msg}", path.display())]
    Io { path: PathBuf, msg: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.to_path_buf(), msg: e.to_string() }
}

fn require(path: PathBuf, what: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Missing { what, path })
    }
}

/// Which approaches and seeds a command covers, and how many worker threads it may use.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub approaches: Vec<Approach>,
    pub seeds: Vec<u64>,
    pub jobs: usize,
}

impl Selection {
    /// Everything the config lists.
    pub fn all(cfg: &ExperimentConfig) -> Self {
        Self { approaches: cfg.attack.approaches.clone(), seeds: cfg.attack.seeds.clone(), jobs: 1 }
    }
}

/// Runs `f` over `items` on a pool of `jobs` threads, keeping input order.
fn par_map<T: Sync, U: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

pub fn scene_dir(out: &Path, scene: &str) -> PathBuf {
    out.join("scenes").join(scene)
}

pub fn model_path(out: &Path) -> PathBuf {
    out.join("model").join("steering.pgt")
}

pub fn attack_dir(out: &Path, approach: Approach, scene: &str, seed: u64) -> PathBuf {
    out.join("attacks").join(approach.name()).join(scene).join(format!("seed-{seed}"))
}

/// Stores the fully materialized config next to the outputs.
pub fn write_snapshot(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let p = out.join("config.snapshot.toml");
    let text = cfg.to_toml()?;
    fs::write(&p, text).map_err(io_err(&p))
}

/// Hex SHA-256 over the files of `dir`, in name order, each prefixed by its name.
pub fn hash_dir(dir: &Path) -> Result<String> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for n in names {
        let p = dir.join(&n);
        h.update(n.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(&p).map_err(io_err(&p))?);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub scene: String,
    pub lane: String,
    pub curve_radius_m: f64,
    pub frames: usize,
    pub ground_truth_deg: f64,
    pub sha256: String,
}

/// Renders every configured scene into `out/scenes/<name>` and writes `scenes/manifest.csv`.
pub fn cmd_gen_scenes(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Vec<ManifestRow>> {
    cfg.validate()?;
    write_snapshot(cfg, out)?;
    let rows = par_map(jobs, &cfg.scenes, |scene| {
        let slice = render_scene(scene, &scene.sign.load()?)?;
        let dir = scene_dir(out, &scene.name);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        save_slice(&slice, &dir)?;
        log::info!("scene {} written to {}", scene.name, dir.display());
        Ok(ManifestRow {
            scene: scene.name.clone(),
            lane: scene.lane.to_string(),
            curve_radius_m: scene.curve_radius_m,
            frames: slice.len(),
            ground_truth_deg: scene.ground_truth_angle(),
            sha256: hash_dir(&dir)?,
        })
    })?;
    let p = out.join("scenes").join("manifest.csv");
    write_csv(&p, &rows)?;
    Ok(rows)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io { path: path.into(), msg: e.to_string() })?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io { path: path.into(), msg: e.to_string() })?;
    }
    w.flush().map_err(io_err(path))
}

/// What `cmd_train` records in `model/train.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub checksum: String,
    pub train_scenes: usize,
    pub validation_scenes: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub epoch_loss: Vec<f64>,
}

/// Trains the steering model on a seeded scene family and writes `model/steering.pgt`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<(SteeringModel, TrainReport)> {
    cfg.validate()?;
    write_snapshot(cfg, out)?;
    let t = &cfg.train;
    let family = scene_family(t.family_size, cfg.seed);
    let slices = family.iter().map(|c| render_scene(c, &c.sign.load()?)).collect::<Result<Vec<_>, _>>()?;
    let split = t.train_count();
    let (train, val) = slices.split_at(split);
    let model = SteeringModel::new(t.arch.clone(), cfg.seed)?;
    let outcome = train_steering(model, train, &t.config)?;
    let report = TrainReport {
        checksum: outcome.model.params().checksum(),
        train_scenes: train.len(),
        validation_scenes: val.len(),
        train_mse: evaluate_mse(&outcome.model, train)?,
        validation_mse: if val.is_empty() { f64::NAN } else { evaluate_mse(&outcome.model, val)? },
        epoch_loss: outcome.train_loss,
    };
    log::info!("trained: train MSE {:.4}, validation MSE {:.4}", report.train_mse, report.validation_mse);
    let p = model_path(out);
    fs::create_dir_all(p.parent().unwrap_or(out)).map_err(io_err(out))?;
    outcome.model.params().save(&p)?;
    let meta = out.join("model").join("train.toml");
    let text = toml::to_string(&report).map_err(|e| CliError::Io { path: meta.clone(), msg: e.to_string() })?;
    fs::write(&meta, text).map_err(io_err(&meta))?;
    Ok((outcome.model, report))
}

/// Loads the checkpoint written by [`cmd_train`].
pub fn load_model(cfg: &ExperimentConfig, out: &Path) -> Result<SteeringModel> {
    let p = require(model_path(out), "steering checkpoint")?;
    Ok(SteeringModel::from_params(cfg.train.arch.clone(), ParamSet::load(&p)?)?)
}

fn load_scene(out: &Path, scene: &SceneConfig) -> Result<VideoSlice> {
    let dir = require(scene_dir(out, &scene.name), "scene directory")?;
    Ok(load_slice(&dir)?)
}

fn jobs_for(cfg: &ExperimentConfig, sel: &Selection) -> Vec<(Approach, usize, u64)> {
    let mut v = Vec::new();
    for &a in &sel.approaches {
        for k in 0..cfg.scenes.len() {
            for &s in &sel.seeds {
                v.push((a, k, s));
            }
        }
    }
    v
}

/// Runs the selected approaches on every scene and seed, saving each run's artifacts.
pub fn cmd_attack(cfg: &ExperimentConfig, out: &Path, sel: &Selection) -> Result<Vec<AttackArtifacts>> {
    cfg.validate()?;
    write_snapshot(cfg, out)?;
    let model = load_model(cfg, out)?;
    let slices = cfg.scenes.iter().map(|s| load_scene(out, s)).collect::<Result<Vec<_>>>()?;
    let signs = cfg.scenes.iter().map(|s| s.sign.load()).collect::<Result<Vec<_>, _>>()?;
    par_map(sel.jobs, &jobs_for(cfg, sel), |&(approach, k, seed)| {
        let scene = &cfg.scenes[k].name;
        let acfg = cfg.attack.config_for(approach, seed);
        let art = run_attack(approach, &slices[k], &model, &signs[k], &acfg)?;
        let dir = attack_dir(out, approach, scene, seed);
        art.save(&dir)?;
        log::info!("{approach} on {scene} seed {seed} written to {}", dir.display());
        Ok(art)
    })
}

/// Everything `cmd_eval` computes for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub approach: Approach,
    pub scene: String,
    pub seed: u64,
    pub series: ErrorSeries,
    pub summary: SummaryRow,
}

/// Scores saved attack artifacts: per-frame errors, metrics, closed-loop driving and plots.
pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path, sel: &Selection) -> Result<Vec<EvalRun>> {
    cfg.validate()?;
    write_snapshot(cfg, out)?;
    let model = load_model(cfg, out)?;
    let slices = cfg.scenes.iter().map(|s| load_scene(out, s)).collect::<Result<Vec<_>>>()?;
    let runs = par_map(sel.jobs, &jobs_for(cfg, sel), |&(approach, k, seed)| {
        let scene = &cfg.scenes[k];
        let slice = &slices[k];
        let dir = require(attack_dir(out, approach, &scene.name, seed), "attack artifacts")?;
        require(dir.join("sign.pgt"), "attack sign")?;
        let sign = AttackArtifacts::load_sign(&dir)?;
        let adv = match approach {
            Approach::Original => slice.clone(),
            Approach::Fgsm => {
                let frames = AttackArtifacts::load_frames(&dir)?
                    .ok_or_else(|| CliError::Missing { what: "perturbed frames", path: dir.join("frames.pgt") })?;
                slice.with_frames(frames)?
            }
            _ => substitute_slice(slice, &sign)?,
        };
        let label = format!("{approach}/{}/{seed}", scene.name);
        let series = error_timeline(&model, slice, &adv, cfg.eval.reference, label)?;
        let (ttc, dist) = if approach.is_physical() && cfg.eval.closed_loop {
            let sim = closed_loop_sim(&mut &model, scene, &sign, &cfg.eval.sim)?;
            (sim.time_to_curb_s, Some(sim.distance_to_center_m))
        } else {
            (None, None)
        };
        let summary = SummaryRow {
            approach: approach.name().into(),
            scene: scene.name.clone(),
            seed,
            mse: steering_mse(&series)?,
            msae: msae(&series)?,
            time_to_curb_s: ttc,
            distance_to_center_m: dist,
        };
        Ok(EvalRun { approach, scene: scene.name.clone(), seed, series, summary })
    })?;

    let dir = out.join("eval");
    fs::create_dir_all(dir.join("timelines")).map_err(io_err(&dir))?;
    let tuples: Vec<_> = runs.iter().map(|r| (r.approach.name(), r.scene.as_str(), r.seed, &r.series)).collect();
    write_results_csv(&dir.join("results.csv"), &tuples)?;
    let rows: Vec<SummaryRow> = runs.iter().map(|r| r.summary.clone()).collect();
    write_summary_csv(&dir.join("summary.csv"), &rows)?;
    let mut groups: BTreeMap<(usize, u64), Vec<&ErrorSeries>> = BTreeMap::new();
    for r in &runs {
        let k = cfg.scenes.iter().position(|s| s.name == r.scene).unwrap_or(0);
        groups.entry((k, r.seed)).or_default().push(&r.series);
    }
    for ((k, seed), series) in groups {
        plot_timelines(&dir.join("timelines").join(format!("{}-seed-{seed}.png", cfg.scenes[k].name)), &series)?;
    }
    Ok(runs)
}

/// One line of `report.csv`: metrics averaged over every scene and seed of an approach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub approach: String,
    pub runs: usize,
    pub mse: f64,
    pub msae: f64,
    /// Runs whose closed-loop drive reached the curb.
    pub curb_hits: usize,
}

/// Aggregates `eval/summary.csv` into `report.csv`, ordered physgan, fgsm, physfgsm, rp2,
/// noise, original.
pub fn cmd_report(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ReportRow>> {
    let p = require(out.join("eval").join("summary.csv"), "evaluation summary")?;
    let mut rdr = csv::Reader::from_path(&p).map_err(|e| CliError::Io { path: p.clone(), msg: e.to_string() })?;
    let rows: Vec<SummaryRow> = rdr
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Io { path: p.clone(), msg: e.to_string() })?;
    let mut report = Vec::new();
    for a in Approach::ALL {
        let mine: Vec<&SummaryRow> = rows.iter().filter(|r| r.approach == a.name()).collect();
        if mine.is_empty() {
            continue;
        }
        let n = mine.len() as f64;
        report.push(ReportRow {
            model: cfg.name.clone(),
            approach: a.name().into(),
            runs: mine.len(),
            mse: mine.iter().map(|r| r.mse).sum::<f64>() / n,
            msae: mine.iter().map(|r| r.msae).sum::<f64>() / n,
            curb_hits: mine.iter().filter(|r| r.time_to_curb_s.is_some()).count(),
        });
    }
    write_csv(&out.join("report.csv"), &report)?;
    Ok(report)
}

/// Plain-text table of a report.
pub fn format_report(rows: &[ReportRow]) -> String {
    let mut s = format!("{:<10} {:<9} {:>5} {:>10} {:>8} {:>5}\n", "model", "approach", "runs", "mse", "msae", "curb");
    for r in rows {
        s += &format!(
            "{:<10} {:<9} {:>5} {:>10.3} {:>8.3} {:>5}\n",
            r.model, r.approach, r.runs, r.mse, r.msae, r.curb_hits
        );
    }
    s
}
