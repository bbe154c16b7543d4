//! Soft Actor-Critic with clipped double-Q targets and Polyak-averaged target critics.

use diffnet::{Checkpoint, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{contract, CoreError, Result};
use crate::observation::Observation;

use super::nets::{ApproxOptimizer, Approximator, NetworkConfig};
use super::policy::{ActionMode, SquashedSample};
use super::replay::{ReplayBuffer, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub gamma: f64,
    pub alpha: f64,
    /// Target smoothing: `target ← ρ·target + (1 − ρ)·online`.
    pub rho: f64,
    pub batch_size: usize,
    pub lr: f64,
    /// Environment steps taken with uniform random actions before any update.
    pub warmup_steps: usize,
    /// Gradient steps after each episode; `None` means one per environment step of that episode.
    pub gradient_steps_per_episode: Option<usize>,
    /// Exploration noise of the DDPG baseline (std in squashed action space).
    pub exploration_noise: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 0.2,
            rho: 0.995,
            batch_size: 64,
            lr: 1e-4,
            warmup_steps: 1000,
            gradient_steps_per_episode: None,
            exploration_noise: 0.1,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return contract(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return contract(format!("alpha {} must be nonnegative", self.alpha));
        }
        // ρ = 1 (frozen targets) is accepted for diagnostics.
        if !(0.0..=1.0).contains(&self.rho) {
            return contract(format!("rho {} outside [0, 1]", self.rho));
        }
        if self.batch_size == 0 {
            return contract("batch size must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return contract(format!("learning rate {} must be nonnegative", self.lr));
        }
        if !(self.exploration_noise >= 0.0) {
            return contract("exploration noise must be nonnegative");
        }
        Ok(())
    }
}

/// A sampled minibatch in column form.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub obs: Vec<&'a Observation>,
    pub actions: Vec<[f64; 2]>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<&'a Observation>,
    pub dones: Vec<bool>,
}

impl<'a> Batch<'a> {
    pub fn from_transitions(ts: &[&'a Transition]) -> Self {
        Self {
            obs: ts.iter().map(|t| t.obs.as_ref()).collect(),
            actions: ts.iter().map(|t| t.action.to_array()).collect(),
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_obs: ts.iter().map(|t| t.next_obs.as_ref()).collect(),
            dones: ts.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Loss diagnostics of one gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainDiagnostics {
    pub q1_loss: f64,
    /// Absent for single-critic learners.
    pub q2_loss: Option<f64>,
    pub policy_loss: f64,
    pub mean_target: f64,
}

/// Policy θ, critics φ1, φ2 and their targets.
#[derive(Debug, Clone)]
pub struct SacNets {
    pub policy: Approximator,
    pub q1: Approximator,
    pub q2: Approximator,
    pub q1_target: Approximator,
    pub q2_target: Approximator,
}

impl SacNets {
    /// Fresh networks; targets start as exact copies of their critics.
    pub fn new(cfg: &NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        let policy = Approximator::state_head("policy", cfg, 4, rng)?;
        let q1 = Approximator::critic("q1", cfg, rng)?;
        let q2 = Approximator::critic("q2", cfg, rng)?;
        let q1_target = q1.renamed_copy("q1_target")?;
        let q2_target = q2.renamed_copy("q2_target")?;
        Ok(Self { policy, q1, q2, q1_target, q2_target })
    }

    pub fn all(&self) -> [&Approximator; 5] {
        [&self.policy, &self.q1, &self.q2, &self.q1_target, &self.q2_target]
    }

    pub fn all_mut(&mut self) -> [&mut Approximator; 5] {
        [&mut self.policy, &mut self.q1, &mut self.q2, &mut self.q1_target, &mut self.q2_target]
    }

    /// Squashed-Gaussian draws for a batch; `noise` supplies one standard
    /// normal pair per row (zeros give the mean actions).
    pub fn policy_samples(&self, obs: &[&Observation], noise: &[[f64; 2]]) -> Result<Vec<SquashedSample>> {
        let out = self.policy.infer_state(obs)?;
        Ok(decode_samples(&out, noise))
    }
}

fn decode_samples(head_out: &Tensor, noise: &[[f64; 2]]) -> Vec<SquashedSample> {
    head_out.rows().zip(noise).map(|(r, n)| SquashedSample::new([r[0], r[1]], [r[2], r[3]], *n)).collect()
}

/// Standard normal pairs drawn in row order.
pub fn draw_noise(n: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect()
}

/// Acts in one state; stochastic draws consume two standard normals.
pub fn sample_action(
    policy: &Approximator,
    obs: &Observation,
    mode: ActionMode,
    rng: &mut impl Rng,
) -> Result<(Action, f64)> {
    let noise = match mode {
        ActionMode::Stochastic => draw_noise(1, rng)[0],
        ActionMode::Deterministic => [0.0, 0.0],
    };
    let out = policy.infer_state(&[obs])?;
    if !out.all_finite() {
        return Err(CoreError::Numeric("non-finite policy output".into()));
    }
    let s = decode_samples(&out, &[noise])[0];
    Ok((s.action, s.log_prob))
}

/// Soft clipped double-Q target for one transition.
pub fn soft_target(reward: f64, done: bool, gamma: f64, alpha: f64, q1: f64, q2: f64, log_prob: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * (q1.min(q2) - alpha * log_prob)
    }
}

/// Targets with the per-element quantities that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct QTargets {
    pub y: Vec<f64>,
    pub next_log_probs: Vec<f64>,
    pub target_q1: Vec<f64>,
    pub target_q2: Vec<f64>,
}

/// `y = r + γ·(min_i Q_target,i(s', ã') − α·log π(ã'|s'))` with `ã'`
/// freshly sampled from the current policy; `y = r` for terminal transitions.
pub fn compute_q_target(batch: &Batch, nets: &SacNets, cfg: &SacConfig, rng: &mut impl Rng) -> Result<QTargets> {
    let noise = draw_noise(batch.len(), rng);
    let samples = nets.policy_samples(&batch.next_obs, &noise)?;
    let next_actions: Vec<[f64; 2]> = samples.iter().map(|s| s.action.to_array()).collect();
    let target_q1 = nets.q1_target.infer_q(&batch.next_obs, &next_actions)?;
    let target_q2 = nets.q2_target.infer_q(&batch.next_obs, &next_actions)?;
    let next_log_probs: Vec<f64> = samples.iter().map(|s| s.log_prob).collect();
    let y = (0..batch.len())
        .map(|i| {
            soft_target(
                batch.rewards[i],
                batch.dones[i],
                cfg.gamma,
                cfg.alpha,
                target_q1[i],
                target_q2[i],
                next_log_probs[i],
            )
        })
        .collect();
    Ok(QTargets { y, next_log_probs, target_q1, target_q2 })
}

/// Mean of `½(q − y)²`.
pub fn half_mse(q: &[f64], y: &[f64]) -> f64 {
    q.iter().zip(y).map(|(a, b)| 0.5 * (a - b).powi(2)).sum::<f64>() / q.len() as f64
}

/// Soft Bellman residual of one critic against fixed targets.
pub fn q_loss(batch: &Batch, critic: &Approximator, y: &[f64]) -> Result<f64> {
    Ok(half_mse(&critic.infer_q(&batch.obs, &batch.actions)?, y))
}

/// One descent step on [`q_loss`]; returns the loss before the step.
pub fn q_descent(batch: &Batch, critic: &mut Approximator, opt: &mut ApproxOptimizer, y: &[f64]) -> Result<f64> {
    let q = critic.forward_q(&batch.obs, &batch.actions)?;
    let n = q.len() as f64;
    let grad: Vec<f64> = q.iter().zip(y).map(|(a, b)| (a - b) / n).collect();
    critic.backward(&Tensor::new(vec![q.len(), 1], grad)?)?;
    opt.step(critic)?;
    Ok(half_mse(&q, y))
}

/// Mean over the batch of `α·log π(ã|s) − min_i Q_i(s, ã)` for
/// reparameterised actions `ã` built from `noise`. With `grads`, the
/// policy's gradient slots receive ∂loss/∂θ; critic parameters are never
/// given gradients.
pub fn policy_objective(
    nets: &mut SacNets,
    obs: &[&Observation],
    noise: &[[f64; 2]],
    alpha: f64,
    grads: bool,
) -> Result<f64> {
    let n = obs.len();
    let out = if grads { nets.policy.forward_state(obs)? } else { nets.policy.infer_state(obs)? };
    let samples = decode_samples(&out, noise);
    let actions: Vec<[f64; 2]> = samples.iter().map(|s| s.action.to_array()).collect();
    let (q1, q2) = if grads {
        (nets.q1.forward_head_for_action_grad(obs, &actions)?, nets.q2.forward_head_for_action_grad(obs, &actions)?)
    } else {
        (nets.q1.infer_q(obs, &actions)?, nets.q2.infer_q(obs, &actions)?)
    };
    let loss = samples
        .iter()
        .zip(q1.iter().zip(&q2))
        .map(|(s, (a, b))| alpha * s.log_prob - a.min(*b))
        .sum::<f64>()
        / n as f64;
    if !loss.is_finite() {
        return Err(CoreError::Numeric("non-finite policy loss".into()));
    }
    if !grads {
        return Ok(loss);
    }

    // ∂(−min Q)/∂a through whichever critic attains the minimum per row.
    let pick1: Vec<bool> = q1.iter().zip(&q2).map(|(a, b)| a <= b).collect();
    let upstream = |first: bool| {
        let g = pick1.iter().map(|&p| if p == first { -1.0 / n as f64 } else { 0.0 }).collect();
        Tensor::new(vec![n, 1], g)
    };
    let da1 = nets.q1.action_grad(&upstream(true)?)?;
    let da2 = nets.q2.action_grad(&upstream(false)?)?;

    let mut head_grad = Vec::with_capacity(n * 4);
    for (i, s) in samples.iter().enumerate() {
        let jac = s.action_jacobian();
        let d_raw = [(da1[i][0] + da2[i][0]) * jac[0], (da1[i][1] + da2[i][1]) * jac[1]];
        let (qm, ql) = s.raw_to_params(d_raw);
        let (lm, ll) = s.log_prob_grads();
        let w = alpha / n as f64;
        head_grad.extend_from_slice(&[qm[0] + w * lm[0], qm[1] + w * lm[1], ql[0] + w * ll[0], ql[1] + w * ll[1]]);
    }
    nets.policy.backward(&Tensor::new(vec![n, 4], head_grad)?)?;
    Ok(loss)
}

/// [`policy_objective`] on fresh noise, without gradients.
pub fn policy_loss(batch: &Batch, nets: &mut SacNets, cfg: &SacConfig, rng: &mut impl Rng) -> Result<f64> {
    let noise = draw_noise(batch.len(), rng);
    policy_objective(nets, &batch.obs, &noise, cfg.alpha, false)
}

/// `target ← ρ·target + (1 − ρ)·online`.
pub fn soft_update(target: &mut Approximator, online: &Approximator, rho: f64) -> Result<()> {
    target.soft_update_from(online, rho)
}

/// Adam states for the three trained approximators.
#[derive(Debug, Clone)]
pub struct SacOptimizers {
    pub policy: ApproxOptimizer,
    pub q1: ApproxOptimizer,
    pub q2: ApproxOptimizer,
}

impl SacOptimizers {
    pub fn new(nets: &SacNets, lr: f64) -> Self {
        Self {
            policy: ApproxOptimizer::new(&nets.policy, lr),
            q1: ApproxOptimizer::new(&nets.q1, lr),
            q2: ApproxOptimizer::new(&nets.q2, lr),
        }
    }
}

/// One gradient step in order: targets, critic descent (Q1 then Q2),
/// policy step, target update.
pub fn sac_train_step(
    nets: &mut SacNets,
    buf: &ReplayBuffer,
    cfg: &SacConfig,
    opt: &mut SacOptimizers,
    rng: &mut impl Rng,
) -> Result<TrainDiagnostics> {
    if buf.len() < cfg.batch_size {
        return Err(CoreError::State(format!(
            "replay buffer holds {} transitions, batch needs {}",
            buf.len(),
            cfg.batch_size
        )));
    }
    let sampled = buf.sample(cfg.batch_size, rng)?;
    let batch = Batch::from_transitions(&sampled);
    let targets = compute_q_target(&batch, nets, cfg, rng)?;
    let q1_loss = q_descent(&batch, &mut nets.q1, &mut opt.q1, &targets.y)?;
    let q2_loss = q_descent(&batch, &mut nets.q2, &mut opt.q2, &targets.y)?;
    let noise = draw_noise(batch.len(), rng);
    let policy_loss = policy_objective(nets, &batch.obs, &noise, cfg.alpha, true)?;
    opt.policy.step(&mut nets.policy)?;
    soft_update(&mut nets.q1_target, &nets.q1, cfg.rho)?;
    soft_update(&mut nets.q2_target, &nets.q2, cfg.rho)?;
    let mean_target = targets.y.iter().sum::<f64>() / targets.y.len() as f64;
    Ok(TrainDiagnostics { q1_loss, q2_loss: Some(q2_loss), policy_loss, mean_target })
}

/// Networks, optimiser state and configuration of a SAC learner.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub cfg: SacConfig,
    pub nets: SacNets,
    pub opt: SacOptimizers,
}

impl SacAgent {
    pub fn new(cfg: SacConfig, net_cfg: &NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let nets = SacNets::new(net_cfg, rng)?;
        let opt = SacOptimizers::new(&nets, cfg.lr);
        Ok(Self { cfg, nets, opt })
    }

    pub fn act(&self, obs: &Observation, mode: ActionMode, rng: &mut impl Rng) -> Result<Action> {
        Ok(sample_action(&self.nets.policy, obs, mode, rng)?.0)
    }

    pub fn train_step(&mut self, buf: &ReplayBuffer, rng: &mut impl Rng) -> Result<TrainDiagnostics> {
        sac_train_step(&mut self.nets, buf, &self.cfg, &mut self.opt, rng)
    }

    pub fn add_to_checkpoint(&self, ck: &mut Checkpoint, with_optimizer: bool) -> Result<()> {
        for a in self.nets.all() {
            a.add_to_checkpoint(ck)?;
        }
        if with_optimizer {
            self.opt.policy.add_to_checkpoint(&self.nets.policy, ck)?;
            self.opt.q1.add_to_checkpoint(&self.nets.q1, ck)?;
            self.opt.q2.add_to_checkpoint(&self.nets.q2, ck)?;
        }
        Ok(())
    }

    pub fn load_from_checkpoint(&mut self, ck: &Checkpoint, with_optimizer: bool) -> Result<()> {
        for a in self.nets.all_mut() {
            a.load_from_checkpoint(ck)?;
        }
        if with_optimizer {
            self.opt.policy.load_from_checkpoint(&self.nets.policy, ck)?;
            self.opt.q1.load_from_checkpoint(&self.nets.q1, ck)?;
            self.opt.q2.load_from_checkpoint(&self.nets.q2, ck)?;
        }
        Ok(())
    }
}
