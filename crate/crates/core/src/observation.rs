//! Agent input: a grayscale image grid plus the raw tracking vector.

use crate::error::{CoreError, Result};

/// Width of the raw tracking vector.
pub const TRACKING_LEN: usize = 8;

/// Indices into the tracking vector.
pub mod tracking {
    pub const SPEED: usize = 0;
    pub const SIN_HEADING_ERROR: usize = 1;
    pub const COS_HEADING_ERROR: usize = 2;
    pub const LATERAL_OFFSET: usize = 3;
    pub const CURVATURE_5M: usize = 4;
    pub const CURVATURE_10M: usize = 5;
    pub const CURVATURE_20M: usize = 6;
    pub const PROGRESS: usize = 7;
    /// Lookahead arclengths (m) of the three curvature entries.
    pub const LOOKAHEADS: [f64; 3] = [5.0, 10.0, 20.0];
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    height: usize,
    width: usize,
    image: Vec<f64>,
    tracking: [f64; TRACKING_LEN],
}

impl Observation {
    /// Row-major image of `height × width` values in `[0, 1]` plus a finite tracking vector.
    pub fn new(height: usize, width: usize, image: Vec<f64>, tracking: [f64; TRACKING_LEN]) -> Result<Self> {
        if height == 0 || width == 0 || image.len() != height * width {
            return Err(CoreError::Dimension(format!(
                "image of {} values does not match {height}×{width}",
                image.len()
            )));
        }
        if image.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CoreError::Contract("image values must lie in [0, 1]".into()));
        }
        if tracking.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Contract("tracking vector must be finite".into()));
        }
        Ok(Self { height, width, image, tracking })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, image: vec![0.0; height * width], tracking: [0.0; TRACKING_LEN] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn image(&self) -> &[f64] {
        &self.image
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.image[row * self.width + col]
    }

    pub fn tracking(&self) -> &[f64; TRACKING_LEN] {
        &self.tracking
    }

    pub fn lateral_offset(&self) -> f64 {
        self.tracking[tracking::LATERAL_OFFSET]
    }

    pub fn progress(&self) -> f64 {
        self.tracking[tracking::PROGRESS]
    }
}
