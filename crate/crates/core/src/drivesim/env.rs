//! Episodic lane-following environment: kinematics, observation, reward and termination.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{contract, CoreError, Result};
use crate::geometry::{dist, wrap_angle};
use crate::observation::{tracking, Observation, TRACKING_LEN};

use super::render::{render, RenderConfig};
use super::route::{RouteGeometry, RouteSpec};
use super::vehicle::{step, VehicleParams, VehicleState};

pub const LANE_DEPARTURE_REWARD: f64 = -200.0;
pub const GOAL_REWARD: f64 = 100.0;
pub const TIMEOUT_REWARD: f64 = 0.0;

/// Per-step reward `|v·cos φ| − |v·sin φ| − |v|·|d|`.
pub fn reward(speed: f64, heading_error: f64, lateral_offset: f64) -> f64 {
    let (s, c) = heading_error.sin_cos();
    (speed * c).abs() - (speed * s).abs() - speed.abs() * lateral_offset.abs()
}

/// Gaussian corruption of the tracking sensor; the simulator's own
/// termination logic always uses the true pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoise {
    /// Standard deviation added to the reported lateral offset (m).
    pub lateral_offset_std: f64,
    /// Standard deviation added to the heading error before sin/cos (rad).
    pub heading_error_std: f64,
    pub seed: u64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self { lateral_offset_std: 0.0, heading_error_std: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub dt: f64,
    pub timeout_steps: usize,
    pub vehicle: VehicleParams,
    pub render: RenderConfig,
    pub noise: SensorNoise,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            timeout_steps: 2000,
            vehicle: VehicleParams::default(),
            render: RenderConfig::default(),
            noise: SensorNoise::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return contract(format!("dt must be positive, got {}", self.dt));
        }
        if self.timeout_steps == 0 {
            return contract("timeout must be at least one step");
        }
        let v = &self.vehicle;
        if ![v.max_accel, v.drag, v.max_speed, v.wheelbase, v.max_steer_angle].iter().all(|x| *x >= 0.0) {
            return contract("vehicle parameters must be nonnegative");
        }
        if !(v.wheelbase > 0.0) {
            return contract("wheelbase must be positive");
        }
        if !(self.noise.lateral_offset_std >= 0.0 && self.noise.heading_error_std >= 0.0) {
            return contract("noise standard deviations must be nonnegative");
        }
        self.render.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    None,
    CollisionOrLaneDeparture,
    GoalReached,
    Timeout,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub done_reason: DoneReason,
    /// True (noise-free) pose error after the step.
    pub lateral_offset: f64,
    pub heading_error: f64,
    pub state: VehicleState,
}

/// One line of a trace log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub throttle: f64,
    pub steer: f64,
    pub reward: f64,
    pub d: f64,
    pub phi: f64,
}

impl TraceRecord {
    pub fn new(t: usize, action: Action, result: &StepResult) -> Self {
        let s = result.state;
        Self {
            t,
            x: s.x,
            y: s.y,
            heading: s.heading,
            v: s.speed,
            throttle: action.throttle(),
            steer: action.steer(),
            reward: result.reward,
            d: result.lateral_offset,
            phi: result.heading_error,
        }
    }
}

/// Signed lateral offset (left positive) and heading error against the route.
pub fn pose_error(state: &VehicleState, geom: &RouteGeometry) -> (f64, f64, f64) {
    let proj = geom.project(state.position());
    (proj.signed_offset, wrap_angle(state.heading - proj.tangent_angle), proj.arclength)
}

/// Noise-free observation of `state` on `route`.
pub fn observe(state: &VehicleState, route: &RouteSpec, geom: &RouteGeometry, cfg: &RenderConfig) -> Observation {
    let (d, phi, s) = pose_error(state, geom);
    let image = render(state, geom, route.lane_half_width, cfg);
    Observation::new(cfg.height, cfg.width, image, tracking_vector(state.speed, phi, d, s, geom))
        .expect("renderer and projection produce in-range values")
}

fn tracking_vector(speed: f64, phi: f64, d: f64, s: f64, geom: &RouteGeometry) -> [f64; TRACKING_LEN] {
    let (sin_phi, cos_phi) = phi.sin_cos();
    let mut t = [0.0; TRACKING_LEN];
    t[tracking::SPEED] = speed;
    t[tracking::SIN_HEADING_ERROR] = sin_phi;
    t[tracking::COS_HEADING_ERROR] = cos_phi;
    t[tracking::LATERAL_OFFSET] = d;
    for (slot, ahead) in [tracking::CURVATURE_5M, tracking::CURVATURE_10M, tracking::CURVATURE_20M]
        .into_iter()
        .zip(tracking::LOOKAHEADS)
    {
        t[slot] = geom.curvature_at(s + ahead);
    }
    t[tracking::PROGRESS] = (s / geom.total_length()).clamp(0.0, 1.0);
    t
}

#[derive(Debug, Clone)]
pub struct DriveEnv {
    cfg: EnvConfig,
    route: RouteSpec,
    geom: RouteGeometry,
    state: VehicleState,
    steps: usize,
    done: bool,
    noise_rng: ChaCha8Rng,
}

impl DriveEnv {
    pub fn new(cfg: EnvConfig, route: RouteSpec) -> Result<Self> {
        cfg.validate()?;
        route.validate()?;
        let geom = RouteGeometry::new(&route);
        let noise_rng = ChaCha8Rng::seed_from_u64(cfg.noise.seed);
        let state = spawn_state(&route);
        Ok(Self { cfg, route, geom, state, steps: 0, done: false, noise_rng })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn route(&self) -> &RouteSpec {
        &self.route
    }

    pub fn geometry(&self) -> &RouteGeometry {
        &self.geom
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Restarts the current route: first waypoint, aligned with the first segment, at rest.
    pub fn reset(&mut self) -> Observation {
        self.state = spawn_state(&self.route);
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    /// Switches to `route` and resets.
    pub fn reset_to(&mut self, route: RouteSpec) -> Result<Observation> {
        route.validate()?;
        self.geom = RouteGeometry::new(&route);
        self.route = route;
        Ok(self.reset())
    }

    /// Places the vehicle at an arbitrary pose (for tests and scripted starts).
    pub fn set_state(&mut self, state: VehicleState) -> Observation {
        self.state = state;
        self.done = false;
        self.observation()
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(CoreError::State("episode finished; call reset".into()));
        }
        self.state = step(&self.state, action, self.cfg.dt, &self.cfg.vehicle);
        self.steps += 1;
        let (d, phi, _) = pose_error(&self.state, &self.geom);
        let (reward, done_reason) = if d.abs() > self.route.lane_half_width {
            (LANE_DEPARTURE_REWARD, DoneReason::CollisionOrLaneDeparture)
        } else if dist(self.state.position(), self.route.goal()) <= self.route.goal_radius {
            (GOAL_REWARD, DoneReason::GoalReached)
        } else if self.steps >= self.cfg.timeout_steps {
            (TIMEOUT_REWARD, DoneReason::Timeout)
        } else {
            (reward(self.state.speed, phi, d), DoneReason::None)
        };
        self.done = done_reason != DoneReason::None;
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.done,
            done_reason,
            lateral_offset: d,
            heading_error: phi,
            state: self.state,
        })
    }

    fn observation(&mut self) -> Observation {
        let noise = &self.cfg.noise;
        if noise.lateral_offset_std == 0.0 && noise.heading_error_std == 0.0 {
            return observe(&self.state, &self.route, &self.geom, &self.cfg.render);
        }
        let (d, phi, s) = pose_error(&self.state, &self.geom);
        let mut gauss = |std: f64| {
            if std > 0.0 {
                Normal::new(0.0, std).expect("validated std").sample(&mut self.noise_rng)
            } else {
                0.0
            }
        };
        let d_noisy = d + gauss(noise.lateral_offset_std);
        let phi_noisy = phi + gauss(noise.heading_error_std);
        let image = render(&self.state, &self.geom, self.route.lane_half_width, &self.cfg.render);
        let t = tracking_vector(self.state.speed, phi_noisy, d_noisy, s, &self.geom);
        Observation::new(self.cfg.render.height, self.cfg.render.width, image, t)
            .expect("renderer produces in-range values")
    }
}

fn spawn_state(route: &RouteSpec) -> VehicleState {
    let [a, b] = [route.waypoints[0], route.waypoints[1]];
    VehicleState { x: a[0], y: a[1], heading: (b[1] - a[1]).atan2(b[0] - a[0]), speed: 0.0 }
}
