use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttackConfig, AttackError, Result};
use crate::nets::ParamSet;
use crate::scene::save_sign_png;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub l_gan_d: f64,
    pub l_gan_g: f64,
    pub l_adv: f64,
    /// Discriminator score of the generated sign.
    pub d_fake: f64,
    pub d_real_median: f64,
}

/// Everything an attack run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackArtifacts {
    pub approach: String,
    pub sign: Tensor,
    pub history: Vec<LossRecord>,
    /// Per-frame predictions on the original slice.
    pub pred_orig: Vec<f64>,
    /// Per-frame predictions with the produced sign substituted.
    pub pred_adv: Vec<f64>,
    /// Whole perturbed recording, for attacks that do not act through the sign.
    pub adv_frames: Option<Tensor>,
    /// Iteration whose sign was kept, for iterative approaches.
    pub selected_iteration: Option<usize>,
    pub config: AttackConfig,
    pub seed: u64,
    pub model_checksum: String,
}

#[derive(Serialize, Deserialize)]
struct RunMeta {
    approach: String,
    seed: u64,
    selected_iteration: Option<usize>,
    model_checksum: String,
    config: AttackConfig,
}

impl AttackArtifacts {
    /// Writes `sign.png`, `sign.pgt`, `losses.csv`, `predictions.csv` and `run.toml`, plus
    /// `frames.pgt` when the attack produced whole perturbed frames.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let io = |p: &Path, e: String| AttackError::Config(format!("writing {}: {e}", p.display()));
        fs::create_dir_all(dir).map_err(|e| io(dir, e.to_string()))?;
        save_sign_png(&self.sign, &dir.join("sign.png"))?;
        let mut ps = ParamSet::new();
        ps.push("sign", self.sign.clone());
        ps.save(&dir.join("sign.pgt"))?;
        if let Some(frames) = &self.adv_frames {
            let mut ps = ParamSet::new();
            ps.push("frames", frames.clone());
            ps.save(&dir.join("frames.pgt"))?;
        }

        let p = dir.join("losses.csv");
        let mut w = csv::Writer::from_path(&p).map_err(|e| io(&p, e.to_string()))?;
        w.write_record(["iteration", "l_gan_d", "l_gan_g", "l_adv", "d_fake", "d_real_median"])
            .map_err(|e| io(&p, e.to_string()))?;
        for r in &self.history {
            let row = [r.l_gan_d, r.l_gan_g, r.l_adv, r.d_fake, r.d_real_median].map(|v| v.to_string());
            w.write_record(std::iter::once(r.iteration.to_string()).chain(row)).map_err(|e| io(&p, e.to_string()))?;
        }
        w.flush().map_err(|e| io(&p, e.to_string()))?;

        let p = dir.join("predictions.csv");
        let mut w = csv::Writer::from_path(&p).map_err(|e| io(&p, e.to_string()))?;
        w.write_record(["frame", "pred_orig_deg", "pred_adv_deg"]).map_err(|e| io(&p, e.to_string()))?;
        for (i, (o, a)) in self.pred_orig.iter().zip(&self.pred_adv).enumerate() {
            w.write_record([i.to_string(), o.to_string(), a.to_string()]).map_err(|e| io(&p, e.to_string()))?;
        }
        w.flush().map_err(|e| io(&p, e.to_string()))?;

        let meta = RunMeta {
            approach: self.approach.clone(),
            seed: self.seed,
            selected_iteration: self.selected_iteration,
            model_checksum: self.model_checksum.clone(),
            config: self.config.clone(),
        };
        let p = dir.join("run.toml");
        let text = toml::to_string(&meta).map_err(|e| io(&p, e.to_string()))?;
        fs::write(&p, text).map_err(|e| io(&p, e.to_string()))
    }

    /// Reads the exact sign and run metadata written by [`AttackArtifacts::save`].
    pub fn load_sign(dir: &Path) -> Result<Tensor> {
        let ps = ParamSet::load(&dir.join("sign.pgt"))?;
        ps.tensors().first().cloned().ok_or_else(|| AttackError::Config(format!("{} holds no sign", dir.display())))
    }

    /// The perturbed frames from `frames.pgt`, if the run wrote any.
    pub fn load_frames(dir: &Path) -> Result<Option<Tensor>> {
        let p = dir.join("frames.pgt");
        if !p.exists() {
            return Ok(None);
        }
        Ok(ParamSet::load(&p)?.tensors().first().cloned())
    }

    /// Approach name, seed and config recorded in `run.toml`.
    pub fn load_meta(dir: &Path) -> Result<(String, u64, AttackConfig)> {
        let p = dir.join("run.toml");
        let text = fs::read_to_string(&p).map_err(|e| AttackError::Config(format!("reading {}: {e}", p.display())))?;
        let m: RunMeta = toml::from_str(&text).map_err(|e| AttackError::Config(format!("{}: {e}", p.display())))?;
        Ok((m.approach, m.seed, m.config))
    }
}
