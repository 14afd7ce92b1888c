//! The GAN-based sign attack and its baselines.

mod artifacts;
mod baselines;
mod losses;
mod physgan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nets::{LossKind, NetsError, SteeringModel};
use crate::scene::{substitute_slice, SceneError, VideoSlice};
use crate::tensor::Tensor;
use crate::tensor::TensorError;
use crate::warp::GeometryError;

pub use artifacts::{AttackArtifacts, LossRecord};
pub use baselines::{fgsm_full_frame, middle_frame, middle_patch, phys_fgsm, random_noise_sign, rp2_regression};
pub use losses::{adv_loss, adv_loss_var, gan_loss, gan_loss_var, total_loss};
pub use physgan::{physgan_attack, train_physgan};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("non-finite loss at iteration {iteration}")]
    NonFinite { iteration: usize, partial: Box<AttackArtifacts> },
    #[error("target model parameters changed during the attack ({before} -> {after})")]
    TargetModified { before: String, after: String },
}

pub type Result<T, E = AttackError> = std::result::Result<T, E>;

/// What the adversarial distance is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Predictions on the unmodified slice.
    #[default]
    Original,
    /// Ground-truth angles of the slice.
    GroundTruth,
}

impl Reference {
    /// Reference angles for `slice`, given the model's predictions on it.
    pub fn angles(&self, slice: &VideoSlice, pred_orig: &[f64]) -> Vec<f64> {
        match self {
            Reference::Original => pred_orig.to_vec(),
            Reference::GroundTruth => slice.angles.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Sharpness of the adversarial loss.
    pub beta: f64,
    /// Weight of the adversarial loss against the GAN loss.
    pub lambda: f64,
    pub iterations: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub d_steps: usize,
    pub g_steps: usize,
    pub loss: LossKind,
    /// Step size of FGSM-style baselines and amplitude of the noise baseline.
    pub epsilon: f64,
    pub seed: u64,
    pub reference: Reference,
    /// Colour jitter applied to real samples shown to the discriminator.
    pub real_jitter: f64,
    pub real_batch: usize,
    /// Adam step size for the direct pixel optimization baseline.
    pub rp2_lr: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            beta: 10.0,
            lambda: 10.0,
            iterations: 500,
            lr_g: 3e-3,
            lr_d: 1e-5,
            d_steps: 1,
            g_steps: 1,
            loss: LossKind::Mse,
            epsilon: 8.0 / 255.0,
            seed: 0,
            reference: Reference::Original,
            real_jitter: 0.3,
            real_batch: 4,
            rp2_lr: 1e-2,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AttackError::Config(m));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if !(self.lr_g > 0.0 && self.lr_d > 0.0 && self.rp2_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.real_batch == 0 {
            return bad("real_batch must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.real_jitter) {
            return bad(format!("real_jitter {} outside [0, 1]", self.real_jitter));
        }
        Ok(())
    }
}

/// Runs `f` and fails if the target model's parameters changed.
pub(crate) fn with_frozen_target<T>(model: &SteeringModel, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let before = model.params().checksum();
    let out = f()?;
    let after = model.params().checksum();
    if before != after {
        return Err(AttackError::TargetModified { before, after });
    }
    Ok(out)
}

/// Every attack the harness can run, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    PhysGan,
    Fgsm,
    PhysFgsm,
    Rp2,
    Noise,
    Original,
}

impl Approach {
    pub const ALL: [Approach; 6] =
        [Approach::PhysGan, Approach::Fgsm, Approach::PhysFgsm, Approach::Rp2, Approach::Noise, Approach::Original];

    pub fn name(&self) -> &'static str {
        match self {
            Approach::PhysGan => "physgan",
            Approach::Fgsm => "fgsm",
            Approach::PhysFgsm => "physfgsm",
            Approach::Rp2 => "rp2",
            Approach::Noise => "noise",
            Approach::Original => "original",
        }
    }

    /// Whether the attack acts only through the sign.
    pub fn is_physical(&self) -> bool {
        !matches!(self, Approach::Fgsm)
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Approach {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            AttackError::Config(format!(
                "unknown approach {s:?}; expected one of physgan, fgsm, physfgsm, rp2, noise, original"
            ))
        })
    }
}

/// Runs `approach` on `slice` and packages the result.
///
/// `original_sign` is the asset rendered into the slice; it seeds the noise baseline, sizes
/// every generated sign, and is the sign reported for `fgsm` and `original`.
pub fn run_attack(
    approach: Approach,
    slice: &VideoSlice,
    model: &SteeringModel,
    original_sign: &Tensor,
    cfg: &AttackConfig,
) -> Result<AttackArtifacts> {
    cfg.validate()?;
    let s = original_sign.shape();
    if s.len() != 3 {
        return Err(AttackError::Config(format!("sign must be [c, h, w], got {s:?}")));
    }
    let hw = (s[1], s[2]);
    let checksum = model.params().checksum();
    let pred_orig = model.predict_frames(&slice.frames)?;
    let mut history = Vec::new();
    let mut selected_iteration = None;
    let mut adv_frames = None;
    let sign = match approach {
        Approach::PhysGan => {
            let (art, _, _) = physgan_attack(slice, model, original_sign, cfg)?;
            history = art.history;
            selected_iteration = art.selected_iteration;
            art.sign
        }
        Approach::Fgsm => {
            adv_frames = Some(fgsm_full_frame(slice, model, cfg.epsilon, cfg.loss)?.frames);
            original_sign.clone()
        }
        Approach::PhysFgsm => phys_fgsm(slice, model, cfg.epsilon, cfg.loss, hw)?,
        Approach::Rp2 => {
            let (sign, h) = rp2_regression(slice, model, cfg, hw)?;
            history = h;
            sign
        }
        Approach::Noise => random_noise_sign(original_sign, cfg.epsilon, cfg.seed)?,
        Approach::Original => original_sign.clone(),
    };
    let adv = match (&adv_frames, approach) {
        (Some(f), _) => f.clone(),
        (None, Approach::Original) => slice.frames.clone(),
        (None, _) => substitute_slice(slice, &sign)?.frames,
    };
    let pred_adv = model.predict_frames(&adv)?;
    let after = model.params().checksum();
    if after != checksum {
        return Err(AttackError::TargetModified { before: checksum, after });
    }
    Ok(AttackArtifacts {
        approach: approach.name().into(),
        sign,
        history,
        pred_orig,
        pred_adv,
        adv_frames,
        selected_iteration,
        config: cfg.clone(),
        seed: cfg.seed,
        model_checksum: checksum,
    })
}

impl AttackArtifacts {
    /// The recording the model saw under attack.
    pub fn adversarial_slice(&self, slice: &VideoSlice) -> Result<VideoSlice> {
        match (&self.adv_frames, self.approach.as_str()) {
            (Some(f), _) => Ok(slice.with_frames(f.clone())?),
            (None, "original") => Ok(slice.clone()),
            (None, _) => Ok(substitute_slice(slice, &self.sign)?),
        }
    }
}
