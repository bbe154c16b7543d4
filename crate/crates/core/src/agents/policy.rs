//! Squashed-Gaussian action distribution.
//!
//! A raw sample `u ~ N(mean, exp(log_std)²)` per action dimension is
//! squashed to `throttle = (tanh(u₁) + 1)/2` and `steer = tanh(u₂)`. The
//! log-density of the squashed action is the Gaussian log-density minus
//! the log-Jacobian of each squash: `ln(1 − tanh²u)` for both dimensions
//! plus `ln(1/2)` for the throttle rescaling.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{contract, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    Stochastic,
    Deterministic,
}

/// Shannon entropy `−Σ p ln p` of a discrete distribution (nats), with `0·ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() || p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return contract("probabilities must be finite and nonnegative");
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return contract(format!("probabilities sum to {total}, not 1"));
    }
    Ok(-p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>())
}

/// `ln(1 − tanh²(u))`, stable for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let a = u.abs();
    // 1 − tanh²u = 4 e^{−2a} / (1 + e^{−2a})²
    2.0 * (LN_2 - a - (-2.0 * a).exp().ln_1p())
}

pub fn gaussian_log_density(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) / log_std.exp();
    -0.5 * z * z - log_std - 0.5 * (2.0 * PI).ln()
}

/// Log-density of `tanh(u)` for `u ~ N(mean, exp(log_std)²)`, evaluated at the raw sample.
pub fn tanh_gaussian_log_prob(u: f64, mean: f64, log_std: f64) -> f64 {
    gaussian_log_density(u, mean, log_std) - log_one_minus_tanh_sq(u)
}

pub fn clamp_log_std(raw: f64) -> f64 {
    raw.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

pub fn squash_throttle(u: f64) -> f64 {
    (u.tanh() + 1.0) / 2.0
}

pub fn squash(raw: [f64; 2]) -> Action {
    // Rounding can push (tanh + 1)/2 a hair outside [0, 1]; clamp guards it.
    Action::clamped(squash_throttle(raw[0]), raw[1].tanh())
}

/// A reparameterised draw together with the pieces its gradient needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquashedSample {
    /// Pre-squash sample `u = mean + σ·noise`.
    pub raw: [f64; 2],
    pub noise: [f64; 2],
    pub std: [f64; 2],
    /// Whether each raw log-std was clamped (its gradient is then zero).
    pub clamped: [bool; 2],
    pub action: Action,
    pub log_prob: f64,
}

impl SquashedSample {
    /// `noise = [0, 0]` gives the deterministic (mean) action.
    pub fn new(mean: [f64; 2], raw_log_std: [f64; 2], noise: [f64; 2]) -> Self {
        let mut raw = [0.0; 2];
        let mut std = [0.0; 2];
        let mut clamped = [false; 2];
        let mut log_prob = LN_2;
        for i in 0..2 {
            let ls = clamp_log_std(raw_log_std[i]);
            clamped[i] = ls != raw_log_std[i];
            std[i] = ls.exp();
            raw[i] = mean[i] + std[i] * noise[i];
            log_prob += tanh_gaussian_log_prob(raw[i], mean[i], ls);
        }
        Self { raw, noise, std, clamped, action: squash(raw), log_prob }
    }

    /// `∂a_i/∂u_i` for the squash of each dimension.
    pub fn action_jacobian(&self) -> [f64; 2] {
        let d = |u: f64| 1.0 - u.tanh().powi(2);
        [0.5 * d(self.raw[0]), d(self.raw[1])]
    }

    /// Gradients of `log_prob` with respect to the mean and raw log-std,
    /// holding the noise fixed.
    pub fn log_prob_grads(&self) -> ([f64; 2], [f64; 2]) {
        let mut d_mean = [0.0; 2];
        let mut d_log_std = [0.0; 2];
        for i in 0..2 {
            // Gaussian term is −noise²/2 − log_std; only −ln(1 − tanh²u) depends on u.
            let du = 2.0 * self.raw[i].tanh();
            d_mean[i] = du;
            if !self.clamped[i] {
                d_log_std[i] = -1.0 + du * self.std[i] * self.noise[i];
            }
        }
        (d_mean, d_log_std)
    }

    /// Chain rule from an upstream gradient on the raw sample to (mean, raw log-std).
    pub fn raw_to_params(&self, d_raw: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let mut d_mean = [0.0; 2];
        let mut d_log_std = [0.0; 2];
        for i in 0..2 {
            d_mean[i] = d_raw[i];
            if !self.clamped[i] {
                d_log_std[i] = d_raw[i] * self.std[i] * self.noise[i];
            }
        }
        (d_mean, d_log_std)
    }
}
