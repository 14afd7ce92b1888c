use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CliError, Result};
use crate::attack::{Approach, AttackConfig, Reference};
use crate::eval::SimConfig;
use crate::nets::{SteeringArch, TrainConfig};
use crate::scene::{SceneConfig, SignAsset};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub arch: SteeringArch,
    pub config: TrainConfig,
    /// Scenes drawn from the seeded family.
    pub family_size: usize,
    /// Share of the family held out for validation.
    pub validation_fraction: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            arch: SteeringArch::default(),
            config: TrainConfig::default(),
            family_size: 20,
            validation_fraction: 0.2,
        }
    }
}

impl TrainSettings {
    pub fn train_count(&self) -> usize {
        let val = (self.family_size as f64 * self.validation_fraction).round() as usize;
        self.family_size - val.min(self.family_size.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSettings {
    pub approaches: Vec<Approach>,
    pub seeds: Vec<u64>,
    /// Shared settings; the run seed replaces `config.seed`.
    pub config: AttackConfig,
    /// Full replacements for `config`, keyed by approach.
    pub overrides: BTreeMap<Approach, AttackConfig>,
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            approaches: Approach::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            config: AttackConfig::default(),
            overrides: BTreeMap::new(),
        }
    }
}

impl AttackSettings {
    pub fn config_for(&self, approach: Approach, seed: u64) -> AttackConfig {
        AttackConfig { seed, ..self.overrides.get(&approach).unwrap_or(&self.config).clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub reference: Reference,
    pub closed_loop: bool,
    pub sim: SimConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { reference: Reference::GroundTruth, closed_loop: true, sim: SimConfig::default() }
    }
}

/// Top-level experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Label for the model configuration in reports.
    pub name: String,
    /// Seeds the training family and model initialization.
    pub seed: u64,
    /// Relative paths resolve against the config file's directory.
    pub output_dir: PathBuf,
    pub scenes: Vec<SceneConfig>,
    pub train: TrainSettings,
    pub attack: AttackSettings,
    pub eval: EvalSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut scenes = vec![SceneConfig::default()];
        for (name, r) in
            [("curve-left", -60.0), ("curve-right", 60.0), ("curve-left-tight", -40.0), ("curve-right-tight", 40.0)]
        {
            scenes.push(SceneConfig::curve(name, r));
        }
        Self {
            schema_version: SCHEMA_VERSION,
            name: "toy".into(),
            seed: 0,
            output_dir: PathBuf::from("runs/toy"),
            scenes,
            train: TrainSettings::default(),
            attack: AttackSettings::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads and validates `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::Missing { what: "config file", path: path.to_path_buf() },
            _ => CliError::Io { path: path.to_path_buf(), msg: e.to_string() },
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|msg| CliError::Config { path: path.to_path_buf(), msg })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        for s in &mut cfg.scenes {
            if let SignAsset::File(f) = &mut s.sign {
                if Path::new(f.as_str()).is_relative() {
                    *f = base.join(&*f).to_string_lossy().into_owned();
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without touching the file system; the schema version must match.
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: Option<u32>,
        }
        let v: Version = toml::from_str(text).map_err(|e| e.to_string())?;
        match v.schema_version {
            Some(SCHEMA_VERSION) => {}
            Some(other) => return Err(format!("schema_version {other} is not supported (expected {SCHEMA_VERSION})")),
            None => return Err(format!("schema_version is required (current is {SCHEMA_VERSION})")),
        }
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// The config with every default spelled out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config { path: self.output_dir.clone(), msg: e.to_string() })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config { path: self.output_dir.clone(), msg });
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported", self.schema_version));
        }
        if self.scenes.is_empty() {
            return bad("the scene list is empty".into());
        }
        let mut names = BTreeSet::new();
        for s in &self.scenes {
            if s.name.is_empty() || s.name.contains(['/', '\\']) || s.name.starts_with('.') {
                return bad(format!("scene name {:?} cannot be used as a directory name", s.name));
            }
            if !names.insert(s.name.as_str()) {
                return bad(format!("scene name {:?} appears twice", s.name));
            }
            s.validate()?;
            if let SignAsset::File(f) = &s.sign {
                if !Path::new(f).exists() {
                    return Err(CliError::Missing { what: "sign asset", path: f.into() });
                }
            }
        }
        if self.train.family_size < 1 || !(0.0..1.0).contains(&self.train.validation_fraction) {
            return bad("train.family_size must be at least 1 and validation_fraction in [0, 1)".into());
        }
        if self.train.config.window != self.train.arch.window {
            return bad(format!(
                "train.config.window {} differs from the model window {}",
                self.train.config.window, self.train.arch.window
            ));
        }
        self.train.config.validate()?;
        if self.attack.seeds.is_empty() || self.attack.approaches.is_empty() {
            return bad("attack.seeds and attack.approaches must not be empty".into());
        }
        self.attack.config.validate()?;
        for c in self.attack.overrides.values() {
            c.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn schema_version_is_checked() {
        assert!(ExperimentConfig::from_toml("name = 'x'").unwrap_err().contains("required"));
        assert!(ExperimentConfig::from_toml("schema_version = 9").unwrap_err().contains("not supported"));
        assert!(ExperimentConfig::from_toml("schema_version = 1\nbogus = 2").is_err());
    }

    #[test]
    fn empty_scene_list_rejected() {
        let cfg = ExperimentConfig::from_toml("schema_version = 1\nscenes = []").unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config { .. })));
    }

    #[test]
    fn overrides_replace_shared_settings() {
        let cfg = ExperimentConfig::from_toml(
            "schema_version = 1\n[attack.config]\nbeta = 2.0\n[attack.overrides.rp2]\nrp2_lr = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.attack.config_for(Approach::PhysGan, 7).beta, 2.0);
        assert_eq!(cfg.attack.config_for(Approach::PhysGan, 7).seed, 7);
        let rp2 = cfg.attack.config_for(Approach::Rp2, 1);
        assert_eq!((rp2.beta, rp2.rp2_lr), (10.0, 0.5));
    }
}
