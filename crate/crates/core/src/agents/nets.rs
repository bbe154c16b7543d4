//! Function approximators: a fusion encoder followed by a dense head.

use diffnet::{adam_step, difference_resolution, AdamConfig, AdamState, Checkpoint, GradCheckReport, LayerSpec, Net, ParamStore, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, CoreError, Result};
use crate::fusion::{append_actions, EncoderConfig, FusionEncoder, STATE_ACTION_FEATURES, STATE_FEATURES};
use crate::observation::Observation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub encoder: EncoderConfig,
    /// Width of the two hidden relu layers in every head.
    pub hidden: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { encoder: EncoderConfig::default(), hidden: 64 }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return contract("head width must be positive");
        }
        self.encoder.validate()
    }
}

/// Layer stack of a head: two relu hidden layers and a linear output.
pub fn head_layers(inputs: usize, hidden: usize, outputs: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense { inputs, outputs: hidden },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: hidden, outputs: hidden },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: hidden, outputs },
    ]
}

/// Encoder plus head, with parameters named `{prefix}/encoder/...` and `{prefix}/head/...`.
#[derive(Debug, Clone)]
pub struct Approximator {
    prefix: String,
    encoder: FusionEncoder,
    head: Net,
}

impl Approximator {
    /// Head on the 116 state features.
    pub fn state_head(prefix: &str, cfg: &NetworkConfig, outputs: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::new(prefix, cfg, STATE_FEATURES, outputs, rng)
    }

    /// Scalar head on the 118 state-action features.
    pub fn critic(prefix: &str, cfg: &NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        Self::new(prefix, cfg, STATE_ACTION_FEATURES, 1, rng)
    }

    fn new(prefix: &str, cfg: &NetworkConfig, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let encoder = FusionEncoder::new(&format!("{prefix}/encoder"), cfg.encoder.clone(), rng)?;
        let head = Net::new(&format!("{prefix}/head"), &[inputs], &head_layers(inputs, cfg.hidden, outputs), rng)?;
        Ok(Self { prefix: prefix.to_string(), encoder, head })
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn encoder(&self) -> &FusionEncoder {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut FusionEncoder {
        &mut self.encoder
    }

    pub fn head(&self) -> &Net {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Net {
        &mut self.head
    }

    pub fn stores(&self) -> [&ParamStore; 2] {
        [self.encoder.net().params(), self.head.params()]
    }

    pub fn num_scalars(&self) -> usize {
        self.stores().iter().map(|s| s.num_scalars()).sum()
    }

    /// Exact copy under a new name prefix (used to initialise targets).
    pub fn renamed_copy(&self, prefix: &str) -> Result<Self> {
        let mut c = self.clone();
        c.encoder.net_mut().rename_params(&self.prefix, prefix)?;
        c.head.rename_params(&self.prefix, prefix)?;
        c.prefix = prefix.to_string();
        Ok(c)
    }

    /// `self ← ρ·self + (1 − ρ)·online`.
    pub fn soft_update_from(&mut self, online: &Approximator, rho: f64) -> Result<()> {
        self.encoder.net_mut().params_mut().soft_update_from(online.encoder.net().params(), rho)?;
        self.head.params_mut().soft_update_from(online.head.params(), rho)?;
        Ok(())
    }

    /// Euclidean distance between the parameter vectors of two same-shaped approximators.
    pub fn distance(&self, other: &Approximator) -> Result<f64> {
        let e = self.encoder.net().params().distance(other.encoder.net().params())?;
        let h = self.head.params().distance(other.head.params())?;
        Ok(e.hypot(h))
    }

    /// Head output for a batch of states, without recording.
    pub fn infer_state(&self, obs: &[&Observation]) -> Result<Tensor> {
        Ok(self.head.infer(&self.encoder.infer(obs)?)?)
    }

    /// Scalar outputs for state-action pairs, without recording.
    pub fn infer_q(&self, obs: &[&Observation], actions: &[[f64; 2]]) -> Result<Vec<f64>> {
        let x = append_actions(&self.encoder.infer(obs)?, actions)?;
        Ok(self.head.infer(&x)?.into_data())
    }

    /// Recording forward pass for a state head.
    pub fn forward_state(&mut self, obs: &[&Observation]) -> Result<Tensor> {
        let f = self.encoder.forward(obs)?;
        Ok(self.head.forward(&f)?)
    }

    /// Recording forward pass for a critic.
    pub fn forward_q(&mut self, obs: &[&Observation], actions: &[[f64; 2]]) -> Result<Vec<f64>> {
        let x = append_actions(&self.encoder.forward(obs)?, actions)?;
        Ok(self.head.forward(&x)?.into_data())
    }

    /// Backpropagates an output gradient into every parameter of the
    /// approximator (overwriting the gradient slots).
    pub fn backward(&mut self, upstream: &Tensor) -> Result<()> {
        let g = self.head.backward(upstream)?;
        let batch = g.batch();
        let width = g.sample_len();
        let state_grad: Vec<f64> = g.rows().flat_map(|r| r[..STATE_FEATURES].iter().copied()).collect();
        debug_assert!(width == STATE_FEATURES || width == STATE_ACTION_FEATURES);
        self.encoder.backward_params(&Tensor::new(vec![batch, STATE_FEATURES], state_grad)?)?;
        Ok(())
    }

    /// Critic forward that records only the head, so the action gradient
    /// can be taken without touching encoder state.
    pub fn forward_head_for_action_grad(&mut self, obs: &[&Observation], actions: &[[f64; 2]]) -> Result<Vec<f64>> {
        let x = append_actions(&self.encoder.infer(obs)?, actions)?;
        Ok(self.head.forward(&x)?.into_data())
    }

    /// `∂(Σ upstream·Q)/∂a` per row after [`Approximator::forward_head_for_action_grad`];
    /// parameter gradient slots are left untouched.
    pub fn action_grad(&mut self, upstream: &Tensor) -> Result<Vec<[f64; 2]>> {
        let g = self.head.backward_input(upstream)?;
        let w = g.sample_len();
        Ok(g.rows().map(|r| [r[w - 2], r[w - 1]]).collect())
    }

    pub fn add_to_checkpoint(&self, ck: &mut Checkpoint) -> Result<()> {
        for s in self.stores() {
            ck.add_store(s)?;
        }
        Ok(())
    }

    pub fn load_from_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.load_into(self.encoder.net_mut().params_mut())?;
        ck.load_into(self.head.params_mut())?;
        Ok(())
    }

    /// `(name, shape)` of every parameter, for checkpoint diffs.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.stores()
            .iter()
            .flat_map(|s| s.iter().map(|(n, p)| (n.to_string(), p.shape().to_vec())))
            .collect()
    }
}

/// Fixed, sign-varying dyadic weights turning outputs into a scalar loss.
fn projection(len: usize) -> Vec<f64> {
    (0..len).map(|k| (1 + (k * 3) % 8) as f64 / 8.0 * if k % 2 == 0 { 1.0 } else { -1.0 }).collect()
}

impl Approximator {
    /// Output and relu sign pattern of encoder and head, without recording.
    fn infer_with_pattern(&self, obs: &[&Observation], actions: Option<&[[f64; 2]]>) -> Result<(Vec<f64>, Vec<bool>)> {
        let (f, mut pattern) = self.encoder.net().infer_with_pattern(&self.encoder.input(obs)?)?;
        let x = match actions {
            Some(a) => append_actions(&f, a)?,
            None => f,
        };
        let (y, p) = self.head.infer_with_pattern(&x)?;
        pattern.extend(p);
        Ok((y.into_data(), pattern))
    }

    fn store_mut(&mut self, which: usize) -> &mut ParamStore {
        if which == 0 {
            self.encoder.net_mut().params_mut()
        } else {
            self.head.params_mut()
        }
    }
}

/// Central finite-difference check of [`Approximator::backward`] over every
/// encoder and head parameter, for `L = Σ c_k·y_k` with fixed weights `c`.
/// Probes that change a relu sign fall back to the one-sided difference on
/// the unchanged side, as in [`diffnet::finite_difference_report`].
pub fn approximator_gradient_check(
    approx: &mut Approximator,
    obs: &[&Observation],
    actions: Option<&[[f64; 2]]>,
    eps: f64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return contract(format!("step size must be positive, got {eps}"));
    }
    let out = match actions {
        Some(a) => Tensor::new(vec![obs.len(), 1], approx.forward_q(obs, a)?)?,
        None => approx.forward_state(obs)?,
    };
    let weights = projection(out.data().len());
    approx.backward(&Tensor::new(out.shape().to_vec(), weights.clone())?)?;
    // (loss, Σ|c_k·y_k|, relu pattern)
    let loss = |a: &Approximator| -> Result<(f64, f64, Vec<bool>)> {
        let (y, pattern) = a.infer_with_pattern(obs, actions)?;
        let l: f64 = y.iter().zip(&weights).map(|(v, c)| v * c).sum();
        let m: f64 = y.iter().zip(&weights).map(|(v, c)| (v * c).abs()).sum();
        if !l.is_finite() {
            return Err(CoreError::Numeric("non-finite loss during gradient check".into()));
        }
        Ok((l, m, pattern))
    };
    let (base, base_mag, base_pattern) = loss(approx)?;
    let mut report = GradCheckReport::empty();
    for which in 0..2 {
        for pi in 0..approx.stores()[which].len() {
            let (name, p) = approx.stores()[which].by_index(pi);
            let name = name.to_string();
            let analytic = p.grad().to_vec();
            for (j, a) in analytic.iter().enumerate() {
                let orig = approx.stores()[which].by_index(pi).1.value()[j];
                let (hi, lo) = (orig + eps, orig - eps);
                approx.store_mut(which).by_index_mut(pi).value_mut()[j] = hi;
                let (plus, plus_mag, plus_pattern) = loss(approx)?;
                approx.store_mut(which).by_index_mut(pi).value_mut()[j] = lo;
                let (minus, minus_mag, minus_pattern) = loss(approx)?;
                approx.store_mut(which).by_index_mut(pi).value_mut()[j] = orig;
                let (numeric, resolution) = match (plus_pattern == base_pattern, minus_pattern == base_pattern) {
                    (true, true) => ((plus - minus) / (hi - lo), difference_resolution(plus_mag, minus_mag, hi - lo)),
                    (true, false) => {
                        report.one_sided += 1;
                        ((plus - base) / (hi - orig), difference_resolution(plus_mag, base_mag, hi - orig))
                    }
                    (false, true) => {
                        report.one_sided += 1;
                        ((base - minus) / (orig - lo), difference_resolution(base_mag, minus_mag, orig - lo))
                    }
                    (false, false) => {
                        report.skipped += 1;
                        continue;
                    }
                };
                report.record(&name, j, *a, numeric, resolution);
            }
        }
    }
    Ok(report)
}

/// Adam state for both parameter stores of one approximator.
#[derive(Debug, Clone)]
pub struct ApproxOptimizer {
    encoder: AdamState,
    head: AdamState,
}

impl ApproxOptimizer {
    pub fn new(approx: &Approximator, lr: f64) -> Self {
        let cfg = AdamConfig::with_lr(lr);
        Self { encoder: AdamState::new(approx.encoder.net().params(), cfg), head: AdamState::new(approx.head.params(), cfg) }
    }

    /// One Adam update from the gradients left by [`Approximator::backward`].
    pub fn step(&mut self, approx: &mut Approximator) -> Result<()> {
        adam_step(approx.encoder.net_mut().params_mut(), &mut self.encoder)?;
        adam_step(approx.head.params_mut(), &mut self.head)?;
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.head.step()
    }

    /// Stores moments as `adam/{param}/m|v` and the step counter as `adam/{prefix}/step`.
    pub fn add_to_checkpoint(&self, approx: &Approximator, ck: &mut Checkpoint) -> Result<()> {
        for (state, store) in [(&self.encoder, approx.stores()[0]), (&self.head, approx.stores()[1])] {
            for (((name, p), m), v) in store.iter().zip(state.first_moments()).zip(state.second_moments()) {
                ck.add_array(format!("adam/{name}/m"), p.shape().to_vec(), m.clone())?;
                ck.add_array(format!("adam/{name}/v"), p.shape().to_vec(), v.clone())?;
            }
        }
        ck.add_array(format!("adam/{}/step", approx.prefix), vec![1], vec![self.steps() as f64])?;
        Ok(())
    }

    pub fn load_from_checkpoint(&mut self, approx: &Approximator, ck: &Checkpoint) -> Result<()> {
        let step = ck
            .get(&format!("adam/{}/step", approx.prefix))
            .map(|(_, d)| d[0] as u64)
            .ok_or_else(|| CoreError::State(format!("checkpoint lacks optimizer state for {}", approx.prefix)))?;
        for (state, store) in [(&mut self.encoder, approx.stores()[0]), (&mut self.head, approx.stores()[1])] {
            let mut ms = Vec::new();
            let mut vs = Vec::new();
            for (name, _) in store.iter() {
                let get = |k: &str| {
                    ck.get(&format!("adam/{name}/{k}"))
                        .map(|(_, d)| d.to_vec())
                        .ok_or_else(|| CoreError::State(format!("checkpoint lacks adam/{name}/{k}")))
                };
                ms.push(get("m")?);
                vs.push(get("v")?);
            }
            state.restore(step, ms, vs)?;
        }
        Ok(())
    }
}
