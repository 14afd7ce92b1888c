//! Synthetic drive-by scenes and the on-disk slice format.

mod assets;
mod io;
mod render;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{derive_seed, seeded_rng, Tensor, TensorError};
use crate::warp::{GeometryError, Quad};

pub use assets::{builtin_sign, load_sign_png, save_sign_png, Logo, SIGN_RESOLUTION};
pub use io::{load_slice, read_corner_track, save_slice, write_corner_track};
pub use render::{
    path_pose, project_billboard, render_background, render_frame, render_scene, render_view, CameraPose,
};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("ingestion error{}: {msg}", frame.map(|f| format!(" at frame {f}")).unwrap_or_default())]
    Ingestion { frame: Option<usize>, msg: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl SceneError {
    pub(crate) fn ingest(frame: Option<usize>, msg: impl Into<String>) -> Self {
        SceneError::Ingestion { frame, msg: msg.into() }
    }
}

pub type Result<T, E = SceneError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneType {
    Straight,
    Curve,
}

impl std::fmt::Display for LaneType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LaneType::Straight => "straight",
            LaneType::Curve => "curve",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub height_m: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { width: 64, height: 64, focal_px: 44.0, cx: 18.0, cy: 26.0, height_m: 1.3 }
    }
}

/// World-space billboard, placed relative to the path at the end of the approach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BillboardConfig {
    pub width_m: f64,
    pub height_m: f64,
    /// Height of the bottom edge above the road.
    pub elevation_m: f64,
    /// Offset of the board center to the right of the path.
    pub lateral_m: f64,
    /// Rotation of the board face toward the road.
    pub yaw_deg: f64,
}

impl Default for BillboardConfig {
    fn default() -> Self {
        Self { width_m: 5.0, height_m: 3.75, elevation_m: 0.3, lateral_m: 4.2, yaw_deg: 25.0 }
    }
}

/// Delineator posts lining the road; a spacing of 0 disables them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadsideConfig {
    pub post_spacing_m: f64,
    /// Distance of the right-hand posts from the path.
    pub right_offset_m: f64,
    pub left_offset_m: f64,
    pub post_height_m: f64,
    pub post_width_m: f64,
}

impl Default for RoadsideConfig {
    fn default() -> Self {
        Self { post_spacing_m: 5.0, right_offset_m: 2.6, left_offset_m: 5.9, post_height_m: 1.0, post_width_m: 0.15 }
    }
}

/// Which image goes on the billboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignAsset {
    Builtin(Logo),
    File(String),
}

impl Default for SignAsset {
    fn default() -> Self {
        SignAsset::Builtin(Logo::Orchard)
    }
}

impl SignAsset {
    pub fn load(&self) -> Result<Tensor> {
        match self {
            SignAsset::Builtin(logo) => Ok(builtin_sign(*logo)),
            SignAsset::File(path) => load_sign_png(std::path::Path::new(path)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub name: String,
    pub lane: LaneType,
    /// Signed path radius; positive turns right. Ignored for straight lanes.
    pub curve_radius_m: f64,
    pub speed_mps: f64,
    pub frame_rate_hz: f64,
    pub frames: usize,
    /// Path distance from the first camera position to the billboard.
    pub initial_distance_m: f64,
    pub lane_width_m: f64,
    pub wheelbase_m: f64,
    pub camera: CameraConfig,
    pub billboard: BillboardConfig,
    pub roadside: RoadsideConfig,
    pub texture_seed: u64,
    pub sign: SignAsset,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            name: "straight".into(),
            lane: LaneType::Straight,
            curve_radius_m: 0.0,
            speed_mps: 8.9,
            frame_rate_hz: 15.0,
            frames: 20,
            initial_distance_m: 21.0,
            lane_width_m: 3.5,
            wheelbase_m: 2.5,
            camera: CameraConfig::default(),
            billboard: BillboardConfig::default(),
            roadside: RoadsideConfig::default(),
            texture_seed: 0,
            sign: SignAsset::default(),
        }
    }
}

impl SceneConfig {
    pub fn curve(name: &str, radius_m: f64) -> Self {
        Self { name: name.into(), lane: LaneType::Curve, curve_radius_m: radius_m, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SceneError::Config(m));
        if !(self.speed_mps > 0.0 && self.speed_mps.is_finite()) {
            return bad(format!("speed must be positive, got {}", self.speed_mps));
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return bad(format!("frame rate must be positive, got {}", self.frame_rate_hz));
        }
        if !(self.initial_distance_m > 0.0) {
            return bad(format!("initial distance must be positive, got {}", self.initial_distance_m));
        }
        if self.frames == 0 {
            return bad("frame count must be at least 1".into());
        }
        if self.lane == LaneType::Curve && !(self.curve_radius_m.abs() > self.lane_width_m) {
            return bad(format!(
                "curve radius {} must exceed the lane width {}",
                self.curve_radius_m, self.lane_width_m
            ));
        }
        let c = &self.camera;
        if c.width == 0 || c.height == 0 || !(c.focal_px > 0.0) || !(c.height_m > 0.0) {
            return bad("camera needs positive size, focal length and height".into());
        }
        let b = &self.billboard;
        if !(b.width_m > 0.0 && b.height_m > 0.0) {
            return bad("billboard needs positive size".into());
        }
        if !(self.wheelbase_m > 0.0) {
            return bad("wheelbase must be positive".into());
        }
        let r = &self.roadside;
        if r.post_spacing_m < 0.0 || (r.post_spacing_m > 0.0 && !(r.post_height_m > 0.0 && r.post_width_m > 0.0)) {
            return bad("roadside posts need non-negative spacing and positive size".into());
        }
        Ok(())
    }

    /// Signed path curvature in 1/m (0 for straight lanes).
    pub fn curvature(&self) -> f64 {
        match self.lane {
            LaneType::Straight => 0.0,
            LaneType::Curve => 1.0 / self.curve_radius_m,
        }
    }

    /// Constant ground-truth steering angle in degrees.
    pub fn ground_truth_angle(&self) -> f64 {
        match self.lane {
            LaneType::Straight => 0.0,
            LaneType::Curve => (self.wheelbase_m / self.curve_radius_m).atan().to_degrees(),
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMeta {
    pub name: String,
    pub seed: u64,
    pub lane: LaneType,
}

/// `n` frames `[n, c, h, w]` in `[0, 1]`, with one angle and one sign quad per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSlice {
    pub frames: Tensor,
    pub angles: Vec<f64>,
    pub quads: Vec<Quad>,
    pub meta: SliceMeta,
}

impl VideoSlice {
    pub fn new(frames: Tensor, angles: Vec<f64>, quads: Vec<Quad>, meta: SliceMeta) -> Result<Self> {
        let s = Self { frames, angles, quads, meta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.frames.shape();
        if shape.len() != 4 || shape[0] == 0 {
            return Err(SceneError::ingest(None, format!("frames must be [n, c, h, w] with n >= 1, got {shape:?}")));
        }
        let n = shape[0];
        if self.angles.len() != n || self.quads.len() != n {
            return Err(SceneError::ingest(
                None,
                format!("{n} frames but {} angles and {} quads", self.angles.len(), self.quads.len()),
            ));
        }
        let (h, w) = (shape[2], shape[3]);
        for (i, q) in self.quads.iter().enumerate() {
            if !q.within(w, h) {
                return Err(SceneError::ingest(Some(i), format!("quad {:?} leaves the {w}x{h} frame", q.to_flat())));
            }
        }
        if let Some(i) = self.angles.iter().position(|a| !a.is_finite()) {
            return Err(SceneError::ingest(Some(i), "non-finite angle"));
        }
        if !self.frames.data().iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(SceneError::ingest(None, "pixel values outside [0, 1]"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// `(c, h, w)` of one frame.
    pub fn frame_shape(&self) -> [usize; 3] {
        let s = self.frames.shape();
        [s[1], s[2], s[3]]
    }

    pub fn frame(&self, i: usize) -> Result<Tensor> {
        Ok(self.frames.index0(i)?)
    }

    /// Replaces the frames, keeping angles, quads and metadata.
    pub fn with_frames(&self, frames: Tensor) -> Result<Self> {
        if frames.shape() != self.frames.shape() {
            return Err(SceneError::Tensor(TensorError::Dimension(format!(
                "replacement frames {:?} do not match {:?}",
                frames.shape(),
                self.frames.shape()
            ))));
        }
        Ok(Self { frames, ..self.clone() })
    }
}

/// Varied scene configurations for training and evaluation: straight lanes
/// and left/right curves with radii from 40 m to 200 m, alternating logos,
/// jittered texture, billboard offset and approach distance.
pub fn scene_family(count: usize, seed: u64) -> Vec<SceneConfig> {
    use rand::Rng;
    const RADII: [f64; 9] = [0.0, 60.0, -60.0, 40.0, -40.0, 100.0, -100.0, 200.0, -200.0];
    let mut rng = seeded_rng(derive_seed(seed, "scene-family"));
    (0..count)
        .map(|i| {
            let r = RADII[i % RADII.len()];
            let base = if r == 0.0 { SceneConfig::default() } else { SceneConfig::curve("", r) };
            let base = SceneConfig {
                name: format!("scene{i:02}"),
                texture_seed: rng.random(),
                sign: SignAsset::Builtin(Logo::ALL[(i / RADII.len() + i) % 2]),
                ..base
            };
            // Redraw the placement jitter until the billboard stays in frame throughout.
            for _ in 0..16 {
                let mut cfg = SceneConfig { initial_distance_m: 21.0 + rng.random_range(-1.5..1.5), ..base.clone() };
                cfg.billboard.lateral_m += rng.random_range(-0.3..0.3);
                if billboard_in_frame(&cfg) {
                    return cfg;
                }
            }
            base
        })
        .collect()
}

fn billboard_in_frame(cfg: &SceneConfig) -> bool {
    let step = cfg.speed_mps * cfg.dt();
    (0..cfg.frames).all(|i| project_billboard(cfg, &path_pose(cfg, i as f64 * step, 0.0, 0.0)).is_ok())
}

/// Pastes `sign` into every frame over that frame's quad.
pub fn substitute_slice(slice: &VideoSlice, sign: &Tensor) -> Result<VideoSlice> {
    let plan = substitution_plan(slice, sign)?;
    slice.with_frames(plan.apply(&slice.frames, sign)?)
}

pub fn substitution_plan(slice: &VideoSlice, sign: &Tensor) -> Result<crate::warp::SubstitutionPlan> {
    let s = sign.shape();
    if s.len() != 3 {
        return Err(TensorError::Dimension(format!("sign must be [c, h, w], got {s:?}")).into());
    }
    Ok(crate::warp::SubstitutionPlan::new(slice.frame_shape(), (s[1], s[2]), &slice.quads)?)
}

/// `clamp(c * x + b, 0, 1)` with contrast `c` and brightness `b` drawn from `rng`.
pub fn augment_image(image: &Tensor, rng: &mut crate::tensor::SeededRng, strength: f64) -> Tensor {
    use rand::Rng;
    let s = strength.clamp(0.0, 1.0);
    if s == 0.0 {
        return image.clone();
    }
    let c = rng.random_range(1.0 - 0.5 * s..=1.0 + 0.5 * s);
    let b = rng.random_range(-0.2 * s..=0.2 * s);
    image.map(|x| (c * x + b).clamp(0.0, 1.0))
}

/// Per-slice random contrast and brightness; angles and quads are untouched.
pub fn color_augment(slice: &VideoSlice, seed: u64, strength: f64) -> Result<VideoSlice> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(SceneError::Config(format!("augmentation strength {strength} outside [0, 1]")));
    }
    let mut rng = seeded_rng(derive_seed(seed, "color-augment"));
    slice.with_frames(augment_image(&slice.frames, &mut rng, strength))
}
