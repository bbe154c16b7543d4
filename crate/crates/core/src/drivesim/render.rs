//! Egocentric top-down camera.
//!
//! The vehicle sits at the bottom-centre of the image facing up: row 0 is the
//! farthest forward, the rightmost column is the vehicle's right-hand side.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::geometry::project_on_segment;

use super::route::RouteGeometry;
use super::vehicle::VehicleState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub height: usize,
    pub width: usize,
    /// Metres covered from the bottom row to the top row.
    pub forward_range: f64,
    /// Metres covered from the left column to the right column.
    pub lateral_range: f64,
    /// Half-thickness of painted lines (m).
    pub line_width: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { height: 64, width: 64, forward_range: 16.0, lateral_range: 16.0, line_width: 0.3 }
    }
}

const ROAD: f64 = 0.3;
const CENTERLINE: f64 = 0.6;
const BOUNDARY: f64 = 1.0;

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return contract("image dimensions must be positive");
        }
        if !(self.forward_range > 0.0 && self.lateral_range > 0.0 && self.line_width > 0.0) {
            return contract("render ranges and line width must be positive");
        }
        Ok(())
    }

    /// Ego-frame `(forward, right)` coordinates of a pixel centre.
    pub fn pixel_offset(&self, row: usize, col: usize) -> (f64, f64) {
        let forward = (self.height as f64 - row as f64 - 0.5) / self.height as f64 * self.forward_range;
        let right = (col as f64 + 0.5 - self.width as f64 / 2.0) / self.width as f64 * self.lateral_range;
        (forward, right)
    }
}

/// Renders road surface, lane boundaries and the centerline around the vehicle.
pub fn render(state: &VehicleState, geom: &RouteGeometry, half_width: f64, cfg: &RenderConfig) -> Vec<f64> {
    let (sin_h, cos_h) = state.heading.sin_cos();
    let reach = cfg.forward_range.hypot(cfg.lateral_range / 2.0) + half_width + cfg.line_width;
    let segments = geom.segments_near(state.position(), reach);
    let mut img = vec![0.0; cfg.height * cfg.width];
    if segments.is_empty() {
        return img;
    }
    for row in 0..cfg.height {
        for col in 0..cfg.width {
            let (f, r) = cfg.pixel_offset(row, col);
            let p = [state.x + f * cos_h + r * sin_h, state.y + f * sin_h - r * cos_h];
            let d = segments
                .iter()
                .map(|&(a, b)| project_on_segment(p, a, b).0)
                .fold(f64::INFINITY, f64::min);
            let road = if d <= half_width { ROAD } else { 0.0 };
            let center = CENTERLINE * (1.0 - d / cfg.line_width).max(0.0);
            let edge = BOUNDARY * (1.0 - (d - half_width).abs() / cfg.line_width).max(0.0);
            img[row * cfg.width + col] = road.max(center).max(edge);
        }
    }
    img
}
