//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{DiffnetError, Result};
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// First and second moments for every parameter of one [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    slots: Vec<(String, Vec<usize>)>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let slots = params.iter().map(|(n, p)| (n.to_string(), p.shape().to_vec())).collect();
        let m: Vec<Vec<f64>> = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        let v = m.clone();
        Self { config, step: 0, slots, m, v }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// Restores moments and the step counter, e.g. from a checkpoint.
    pub fn restore(&mut self, step: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<()> {
        let ok = |x: &[Vec<f64>]| x.len() == self.m.len() && x.iter().zip(&self.m).all(|(a, b)| a.len() == b.len());
        if !ok(&m) || !ok(&v) {
            return Err(DiffnetError::Dimension("optimizer moments do not match parameters".into()));
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }

    fn check(&self, params: &ParamStore) -> Result<()> {
        if params.len() != self.slots.len() {
            return Err(DiffnetError::State(format!(
                "optimizer tracks {} parameters, store has {}",
                self.slots.len(),
                params.len()
            )));
        }
        for ((name, shape), (pname, p)) in self.slots.iter().zip(params.iter()) {
            if name != pname || shape.as_slice() != p.shape() {
                return Err(DiffnetError::State(format!(
                    "optimizer slot {name} {shape:?} does not match parameter {pname} {:?}",
                    p.shape()
                )));
            }
        }
        Ok(())
    }
}

/// One Adam update from the gradients currently stored in `params`; the
/// gradients are zeroed afterwards.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    state.check(params)?;
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, (m, v)) in state.m.iter_mut().zip(state.v.iter_mut()).enumerate() {
        let (value, grad) = params.by_index_mut(i).value_and_grad_mut();
        for (((p, g), mi), vi) in value.iter_mut().zip(grad.iter_mut()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = beta1 * *mi + (1.0 - beta1) * *g;
            *vi = beta2 * *vi + (1.0 - beta2) * *g * *g;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
            *g = 0.0;
        }
    }
    Ok(())
}
