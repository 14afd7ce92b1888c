//! Kinematic lane-keeping loop driven by a steering policy that sees rendered frames.

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::nets::SteeringModel;
use crate::scene::{path_pose, render_view, SceneConfig};
use crate::tensor::{Tape, Tensor};

/// Produces a steering angle in degrees from the frames seen so far.
pub trait SteeringPolicy {
    /// When false the simulator skips rendering and passes no frames.
    fn needs_frames(&self) -> bool {
        true
    }

    /// `frames` is every view rendered so far, oldest first.
    fn steer(&mut self, frames: &[Tensor]) -> Result<f64>;
}

impl SteeringPolicy for &SteeringModel {
    fn steer(&mut self, frames: &[Tensor]) -> Result<f64> {
        let start = frames.len().saturating_sub(self.window());
        let x = Tensor::stack(&frames[start..])?;
        let tape = Tape::new();
        let p = self.params().attach_frozen(&tape);
        let out = self.forward_windows(&p, tape.constant(x), &[frames.len() - start - 1])?;
        Ok(out.value().data()[0])
    }
}

/// Fixed steering, independent of what the camera sees.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSteering(pub f64);

impl SteeringPolicy for ConstantSteering {
    fn needs_frames(&self) -> bool {
        false
    }

    fn steer(&mut self, _: &[Tensor]) -> Result<f64> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Overrides the scene speed.
    pub speed_mps: Option<f64>,
    /// Lateral offset at which the vehicle reaches the curb.
    pub curb_offset_m: f64,
    /// Simulated time; defaults to the time the vehicle needs to reach the billboard.
    pub horizon_s: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { speed_mps: None, curb_offset_m: 1.0, horizon_s: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    /// Offset to the right of the lane centre.
    pub lateral_m: f64,
    /// Heading relative to the lane tangent, clockwise positive.
    pub heading_rad: f64,
    pub speed_mps: f64,
    pub time_s: f64,
    /// Distance travelled along the lane.
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub time_to_curb_s: Option<f64>,
    /// Largest lateral deviation over the run.
    pub distance_to_center_m: f64,
    /// States from the start through the last step.
    pub trajectory: Vec<SimState>,
    pub steering_deg: Vec<f64>,
}

/// Drives `scene` with `sign` on the billboard, closing the loop through `policy`.
///
/// Each step renders the view from the current state, asks the policy for `δ`, then
/// integrates `heading += (v dt / L) tan δ - v dt κ` and `lateral += v dt sin(heading)`,
/// where `κ` is the lane curvature. On a straight lane this is the plain kinematic
/// bicycle update; on a curve, steering at the ground-truth angle keeps the vehicle centred.
pub fn closed_loop_sim(
    policy: &mut dyn SteeringPolicy,
    scene: &SceneConfig,
    sign: &Tensor,
    sim: &SimConfig,
) -> Result<SimOutcome> {
    scene.validate()?;
    let v = sim.speed_mps.unwrap_or(scene.speed_mps);
    if !(v > 0.0 && v.is_finite()) {
        return Err(EvalError::Contract(format!("speed must be positive, got {v}")));
    }
    if !(sim.curb_offset_m > 0.0 && sim.curb_offset_m.is_finite()) {
        return Err(EvalError::Contract(format!("curb offset must be positive, got {}", sim.curb_offset_m)));
    }
    let dt = scene.dt();
    let horizon = sim.horizon_s.unwrap_or(scene.initial_distance_m / v);
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(EvalError::Contract(format!("horizon must be finite and non-negative, got {horizon}")));
    }
    let steps = (horizon / dt).round() as usize;
    let step = v * dt;
    let kappa = scene.curvature();

    let mut state = SimState { lateral_m: 0.0, heading_rad: 0.0, speed_mps: v, time_s: 0.0, distance_m: 0.0 };
    let mut trajectory = vec![state];
    let mut steering = Vec::with_capacity(steps);
    let mut frames = Vec::new();
    let mut time_to_curb = None;
    for k in 0..steps {
        if policy.needs_frames() {
            let pose = path_pose(scene, state.distance_m, state.lateral_m, state.heading_rad);
            frames.push(render_view(scene, &pose, sign)?);
        }
        let delta = policy.steer(&frames)?;
        if !delta.is_finite() {
            return Err(EvalError::Simulation { step: k, msg: format!("policy returned {delta}"), trajectory });
        }
        steering.push(delta);
        state.heading_rad += step / scene.wheelbase_m * delta.to_radians().tan() - step * kappa;
        state.lateral_m += step * state.heading_rad.sin();
        state.distance_m += step * state.heading_rad.cos();
        state.time_s = (k + 1) as f64 * dt;
        if !(state.heading_rad.is_finite() && state.lateral_m.is_finite()) {
            return Err(EvalError::Simulation { step: k, msg: "state became non-finite".into(), trajectory });
        }
        trajectory.push(state);
        if time_to_curb.is_none() && state.lateral_m.abs() >= sim.curb_offset_m {
            time_to_curb = Some(state.time_s);
        }
    }
    let distance_to_center = trajectory.iter().fold(0.0f64, |m, s| m.max(s.lateral_m.abs()));
    Ok(SimOutcome {
        time_to_curb_s: time_to_curb,
        distance_to_center_m: distance_to_center,
        trajectory,
        steering_deg: steering,
    })
}
