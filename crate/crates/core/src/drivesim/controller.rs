//! Scripted pure-pursuit driver, used as a reference for the evaluator.

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::geometry::wrap_angle;

use super::route::RouteGeometry;
use super::vehicle::{VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurePursuit {
    /// Distance ahead of the projected position to steer toward (m).
    pub lookahead: f64,
    pub target_speed: f64,
    /// Proportional gain on the speed error (1/s).
    pub speed_gain: f64,
}

impl Default for PurePursuit {
    fn default() -> Self {
        Self { lookahead: 4.0, target_speed: 6.0, speed_gain: 1.0 }
    }
}

impl PurePursuit {
    pub fn act(&self, state: &VehicleState, geom: &RouteGeometry, params: &VehicleParams) -> Action {
        let proj = geom.project(state.position());
        let target = geom.point_at(proj.arclength + self.lookahead);
        let (dx, dy) = (target[0] - state.x, target[1] - state.y);
        let bearing = wrap_angle(dy.atan2(dx) - state.heading);
        let dist = dx.hypot(dy).max(1e-6);
        let wheel = (2.0 * params.wheelbase * bearing.sin() / dist).atan();
        let accel = params.drag * self.target_speed + self.speed_gain * (self.target_speed - state.speed);
        Action::clamped(accel / params.max_accel, wheel / params.max_steer_angle)
    }
}
