use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Longitudinal and lateral command: throttle in `[0, 1]`, steer in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    throttle: f64,
    steer: f64,
}

impl Action {
    pub fn new(throttle: f64, steer: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&throttle) {
            return contract(format!("throttle {throttle} outside [0, 1]"));
        }
        if !(-1.0..=1.0).contains(&steer) {
            return contract(format!("steer {steer} outside [-1, 1]"));
        }
        Ok(Self { throttle, steer })
    }

    /// Clamps both components into range; NaN maps to zero.
    pub fn clamped(throttle: f64, steer: f64) -> Self {
        let fix = |v: f64, lo: f64, hi: f64| if v.is_nan() { 0.0 } else { v.clamp(lo, hi) };
        Self { throttle: fix(throttle, 0.0, 1.0), steer: fix(steer, -1.0, 1.0) }
    }

    pub fn throttle(&self) -> f64 {
        self.throttle
    }

    pub fn steer(&self) -> f64 {
        self.steer
    }

    pub fn to_array(&self) -> [f64; 2] {
        [self.throttle, self.steer]
    }
}
