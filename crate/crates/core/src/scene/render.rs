//! Pinhole ray casting of the road scene.
//!
//! World coordinates are `(x, z)` on the ground plane, `x` to the right of the
//! starting heading and `z` forward; elevations are measured up from the road.
//! The path starts at the origin heading `+z`. Curves follow a circle of signed
//! radius `R`: `p(s) = (R - R cos(s/R), R sin(s/R))`, heading `s/R`.

use super::assets::{fractal_noise, quantize};
use super::{LaneType, Result, SceneConfig, SceneError, SliceMeta, VideoSlice};
use crate::tensor::{derive_seed, Tensor};
use crate::warp::{composite, Point, Quad};

/// Camera position on the ground plane and heading (radians, clockwise from `+z`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub x: f64,
    pub z: f64,
    pub heading: f64,
}

impl CameraPose {
    fn right(&self) -> (f64, f64) {
        (self.heading.cos(), -self.heading.sin())
    }

    fn forward(&self) -> (f64, f64) {
        (self.heading.sin(), self.heading.cos())
    }

    /// Camera-frame `(lateral, depth)` of a ground-plane point.
    fn to_camera(&self, x: f64, z: f64) -> (f64, f64) {
        let (dx, dz) = (x - self.x, z - self.z);
        let (r, f) = (self.right(), self.forward());
        (dx * r.0 + dz * r.1, dx * f.0 + dz * f.1)
    }
}

/// Pose at path distance `s`, displaced `lateral` metres to the right and
/// rotated `heading_offset` radians relative to the path tangent.
pub fn path_pose(cfg: &SceneConfig, s: f64, lateral: f64, heading_offset: f64) -> CameraPose {
    let (x, z, heading) = match cfg.lane {
        LaneType::Straight => (0.0, s, 0.0),
        LaneType::Curve => {
            let r = cfg.curve_radius_m;
            let th = s / r;
            (r - r * th.cos(), r * th.sin(), th)
        }
    };
    CameraPose { x: x + lateral * heading.cos(), z: z - lateral * heading.sin(), heading: heading + heading_offset }
}

/// Signed distance to the right of the path and arc length along it.
fn path_coords(cfg: &SceneConfig, x: f64, z: f64) -> (f64, f64) {
    match cfg.lane {
        LaneType::Straight => (x, z),
        LaneType::Curve => {
            let r = cfg.curve_radius_m;
            let rho = ((x - r).powi(2) + z * z).sqrt();
            let ang = if r > 0.0 { z.atan2(r - x) } else { z.atan2(x - r) };
            (r.signum() * (r.abs() - rho), ang * r.abs())
        }
    }
}

/// World corners `(x, z, elevation)` of the billboard, TL, TR, BR, BL as seen
/// from the approaching vehicle.
pub(crate) fn billboard_corners(cfg: &SceneConfig) -> [(f64, f64, f64); 4] {
    let b = &cfg.billboard;
    let anchor = path_pose(cfg, cfg.initial_distance_m, b.lateral_m, 0.0);
    let (r, f) = (anchor.right(), anchor.forward());
    let psi = b.yaw_deg.to_radians();
    // Along the board face, from its road-side edge to its far edge.
    let dir = (psi.cos() * r.0 - psi.sin() * f.0, psi.cos() * r.1 - psi.sin() * f.1);
    let half = 0.5 * b.width_m;
    let left = (anchor.x - half * dir.0, anchor.z - half * dir.1);
    let right = (anchor.x + half * dir.0, anchor.z + half * dir.1);
    let (top, bottom) = (b.elevation_m + b.height_m, b.elevation_m);
    [(left.0, left.1, top), (right.0, right.1, top), (right.0, right.1, bottom), (left.0, left.1, bottom)]
}

fn project_corners(cfg: &SceneConfig, pose: &CameraPose) -> Result<Quad> {
    let cam = &cfg.camera;
    let mut pts = [Point::new(0.0, 0.0); 4];
    for (p, (x, z, y)) in pts.iter_mut().zip(billboard_corners(cfg)) {
        let (xc, zc) = pose.to_camera(x, z);
        if zc <= 0.1 {
            return Err(SceneError::Config(format!("billboard corner is behind the camera (depth {zc:.3} m)")));
        }
        *p = Point::new(cam.cx + cam.focal_px * xc / zc, cam.cy - cam.focal_px * (y - cam.height_m) / zc);
    }
    Ok(Quad::new(pts)?)
}

/// Pinhole projection of the billboard for a camera at `pose`.
pub fn project_billboard(cfg: &SceneConfig, pose: &CameraPose) -> Result<Quad> {
    let cam = &cfg.camera;
    let q = project_corners(cfg, pose)?;
    if !q.within(cam.width, cam.height) {
        return Err(SceneError::Config(format!(
            "billboard quad {:?} leaves the {}x{} frame",
            q.to_flat(),
            cam.width,
            cam.height
        )));
    }
    Ok(q)
}

struct Palette {
    road: u64,
    grass: u64,
    sky: u64,
}

fn shade(cfg: &SceneConfig, pal: &Palette, pose: &CameraPose, u: f64, v: f64) -> [f64; 3] {
    let cam = &cfg.camera;
    let xr = (u - cam.cx) / cam.focal_px;
    let yr = -(v - cam.cy) / cam.focal_px;
    let sky = |yr: f64| {
        let az = pose.heading + xr.atan();
        let n = fractal_noise(pal.sky, 6.0 * az, 14.0 * yr.max(0.0));
        let k = 0.1 * (n - 0.5);
        [0.56 + k, 0.72 + k, 0.90 + 0.5 * k]
    };
    if yr >= -1e-9 {
        return sky(yr);
    }
    let t = cam.height_m / -yr;
    let (r, f) = (pose.right(), pose.forward());
    let (x, z) = (pose.x + t * xr * r.0 + t * f.0, pose.z + t * xr * r.1 + t * f.1);
    let (d, s) = path_coords(cfg, x, z);
    let lw = cfg.lane_width_m;
    let ground = if (d - 0.5 * lw).abs() < 0.08 {
        [0.92, 0.92, 0.90]
    } else if (d + 0.5 * lw).abs() < 0.07 && s.rem_euclid(6.0) < 3.0 {
        [0.90, 0.78, 0.20]
    } else if d > -1.5 * lw && d < 0.5 * lw + 0.6 {
        let g = 0.36 + 0.14 * (fractal_noise(pal.road, x / 1.2, z / 1.2) - 0.5);
        [g, g, g * 1.04]
    } else {
        let n = 0.8 + 0.4 * fractal_noise(pal.grass, x / 2.0, z / 2.0);
        [0.25 * n, 0.46 * n, 0.18 * n]
    };
    // Fade into haze with distance so the horizon stays well defined.
    let haze = ((t - 40.0) / 80.0).clamp(0.0, 1.0);
    let h = [0.70, 0.76, 0.82];
    [0, 1, 2].map(|k| ground[k] * (1.0 - haze) + h[k] * haze)
}

/// A roadside post projected to an axis-aligned image rectangle.
struct PostRect {
    u0: f64,
    u1: f64,
    v_top: f64,
    v_base: f64,
    depth: f64,
}

impl PostRect {
    fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u0 && u < self.u1 && v >= self.v_top && v < self.v_base
    }

    fn shade(&self, v: f64) -> [f64; 3] {
        // Fraction of the post height from the top.
        let t = (v - self.v_top) / (self.v_base - self.v_top);
        let c = if (0.1..0.3).contains(&t) { [0.85, 0.12, 0.10] } else { [0.95, 0.95, 0.93] };
        let haze = ((self.depth - 40.0) / 80.0).clamp(0.0, 1.0);
        let h = [0.70, 0.76, 0.82];
        [0, 1, 2].map(|k| c[k] * (1.0 - haze) + h[k] * haze)
    }
}

/// Delineator posts along both road edges, sorted far to near.
fn project_posts(cfg: &SceneConfig, pose: &CameraPose) -> Vec<PostRect> {
    let r = &cfg.roadside;
    if r.post_spacing_m <= 0.0 {
        return Vec::new();
    }
    let cam = &cfg.camera;
    let (_, s0) = path_coords(cfg, pose.x, pose.z);
    let first = (s0 / r.post_spacing_m).floor() as i64;
    let count = (80.0 / r.post_spacing_m).ceil() as i64;
    let mut out = Vec::new();
    for k in first..=first + count {
        let s = k as f64 * r.post_spacing_m;
        for lateral in [r.right_offset_m, -r.left_offset_m] {
            let p = path_pose(cfg, s, lateral, 0.0);
            let (xc, zc) = pose.to_camera(p.x, p.z);
            if zc < 1.0 {
                continue;
            }
            let u = cam.cx + cam.focal_px * xc / zc;
            let half = 0.5 * cam.focal_px * r.post_width_m / zc;
            out.push(PostRect {
                u0: u - half,
                u1: u + half,
                v_top: cam.cy - cam.focal_px * (r.post_height_m - cam.height_m) / zc,
                v_base: cam.cy + cam.focal_px * cam.height_m / zc,
                depth: zc,
            });
        }
    }
    out.sort_by(|a, b| b.depth.total_cmp(&a.depth));
    out
}

/// Renders the view from `pose`: the textured background with `sign` pasted
/// over the billboard quad. Returns the `[3, h, w]` frame and the quad.
pub fn render_frame(cfg: &SceneConfig, pose: &CameraPose, sign: &Tensor) -> Result<(Tensor, Quad)> {
    let quad = project_billboard(cfg, pose)?;
    let background = render_background(cfg, pose)?;
    let frame = composite(&background, sign, &quad)?.map(quantize);
    Ok((frame, quad))
}

/// Like [`render_frame`] but tolerant of off-nominal poses: a billboard that
/// is partly out of view is clipped, and one behind the camera is omitted.
pub fn render_view(cfg: &SceneConfig, pose: &CameraPose, sign: &Tensor) -> Result<Tensor> {
    let background = render_background(cfg, pose)?;
    let frame = match project_corners(cfg, pose) {
        Ok(q) => composite(&background, sign, &q)?,
        Err(SceneError::Config(_)) | Err(SceneError::Geometry(_)) => background,
        Err(e) => return Err(e),
    };
    Ok(frame.map(quantize))
}

/// The road scene without the billboard, before quantization.
pub fn render_background(cfg: &SceneConfig, pose: &CameraPose) -> Result<Tensor> {
    let (h, w) = (cfg.camera.height, cfg.camera.width);
    let pal = Palette {
        road: derive_seed(cfg.texture_seed, "road"),
        grass: derive_seed(cfg.texture_seed, "grass"),
        sky: derive_seed(cfg.texture_seed, "sky"),
    };
    let posts = project_posts(cfg, pose);
    let mut data = vec![0.0; 3 * h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = [0.0; 3];
            for (du, dv) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
                let (u, v) = (j as f64 + du, i as f64 + dv);
                let c = match posts.iter().rev().find(|p| p.contains(u, v)) {
                    Some(p) => p.shade(v),
                    None => shade(cfg, &pal, pose, u, v),
                };
                for k in 0..3 {
                    acc[k] += 0.25 * c[k];
                }
            }
            for k in 0..3 {
                data[(k * h + i) * w + j] = acc[k];
            }
        }
    }
    Ok(Tensor::new(&[3, h, w], data)?)
}

/// Renders the full approach: one frame every `1 / frame_rate` seconds along the path.
pub fn render_scene(cfg: &SceneConfig, sign: &Tensor) -> Result<VideoSlice> {
    cfg.validate()?;
    let step = cfg.speed_mps * cfg.dt();
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut quads = Vec::with_capacity(cfg.frames);
    for i in 0..cfg.frames {
        let pose = path_pose(cfg, i as f64 * step, 0.0, 0.0);
        let (f, q) = render_frame(cfg, &pose, sign).map_err(|e| match e {
            SceneError::Config(m) => SceneError::Config(format!("frame {i}: {m}")),
            other => other,
        })?;
        frames.push(f);
        quads.push(q);
    }
    let meta = SliceMeta { name: cfg.name.clone(), seed: cfg.texture_seed, lane: cfg.lane };
    VideoSlice::new(Tensor::stack(&frames)?, vec![cfg.ground_truth_angle(); cfg.frames], quads, meta)
}
