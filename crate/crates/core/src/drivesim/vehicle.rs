//! Kinematic bicycle model.

use serde::{Deserialize, Serialize};

use crate::action::Action;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// Peak acceleration at full throttle (m/s²).
    pub max_accel: f64,
    /// Linear drag coefficient (1/s).
    pub drag: f64,
    pub max_speed: f64,
    pub wheelbase: f64,
    /// Steering angle at full lock (rad).
    pub max_steer_angle: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self { max_accel: 3.0, drag: 0.1, max_speed: 15.0, wheelbase: 2.5, max_steer_angle: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl VehicleState {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// One explicit-Euler step: position and heading advance with the speed at
/// the start of the step, then speed integrates throttle against drag.
pub fn step(state: &VehicleState, action: Action, dt: f64, params: &VehicleParams) -> VehicleState {
    let v = state.speed;
    let accel = params.max_accel * action.throttle() - params.drag * v;
    let yaw_rate = v / params.wheelbase * (params.max_steer_angle * action.steer()).tan();
    VehicleState {
        x: state.x + v * state.heading.cos() * dt,
        y: state.y + v * state.heading.sin() * dt,
        heading: state.heading + yaw_rate * dt,
        speed: (v + accel * dt).clamp(0.0, params.max_speed),
    }
}
