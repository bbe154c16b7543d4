//! Deterministic-policy baseline: one critic, target actor and target critic.

use diffnet::{Checkpoint, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::action::Action;
use crate::error::{CoreError, Result};
use crate::observation::Observation;

use super::nets::{ApproxOptimizer, Approximator, NetworkConfig};
use super::policy::{squash, ActionMode};
use super::replay::ReplayBuffer;
use super::sac::{half_mse, q_descent, soft_update, Batch, SacConfig, TrainDiagnostics};

#[derive(Debug, Clone)]
pub struct DdpgNets {
    pub policy: Approximator,
    pub q1: Approximator,
    pub policy_target: Approximator,
    pub q1_target: Approximator,
}

impl DdpgNets {
    pub fn new(cfg: &NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        let policy = Approximator::state_head("policy", cfg, 2, rng)?;
        let q1 = Approximator::critic("q1", cfg, rng)?;
        let policy_target = policy.renamed_copy("policy_target")?;
        let q1_target = q1.renamed_copy("q1_target")?;
        Ok(Self { policy, q1, policy_target, q1_target })
    }

    pub fn all(&self) -> [&Approximator; 4] {
        [&self.policy, &self.q1, &self.policy_target, &self.q1_target]
    }

    pub fn all_mut(&mut self) -> [&mut Approximator; 4] {
        [&mut self.policy, &mut self.q1, &mut self.policy_target, &mut self.q1_target]
    }
}

fn squashed_actions(raw: &Tensor) -> Vec<[f64; 2]> {
    raw.rows().map(|r| squash([r[0], r[1]]).to_array()).collect()
}

/// Squashed actor output, plus clipped Gaussian noise of std `noise_std` in stochastic mode.
pub fn ddpg_action(
    policy: &Approximator,
    obs: &Observation,
    mode: ActionMode,
    noise_std: f64,
    rng: &mut impl Rng,
) -> Result<Action> {
    let raw = policy.infer_state(&[obs])?;
    if !raw.all_finite() {
        return Err(CoreError::Numeric("non-finite actor output".into()));
    }
    let a = squash([raw.data()[0], raw.data()[1]]);
    match mode {
        ActionMode::Deterministic => Ok(a),
        ActionMode::Stochastic => {
            let n0: f64 = rng.sample(StandardNormal);
            let n1: f64 = rng.sample(StandardNormal);
            Ok(Action::clamped(a.throttle() + noise_std * n0, a.steer() + noise_std * n1))
        }
    }
}

/// Critic targets `y = r + γ·Q_target(s', μ_target(s'))`, and `y = r` when done.
pub fn ddpg_targets(batch: &Batch, nets: &DdpgNets, gamma: f64) -> Result<Vec<f64>> {
    let next_actions = squashed_actions(&nets.policy_target.infer_state(&batch.next_obs)?);
    let q = nets.q1_target.infer_q(&batch.next_obs, &next_actions)?;
    Ok((0..batch.len()).map(|i| if batch.dones[i] { batch.rewards[i] } else { batch.rewards[i] + gamma * q[i] }).collect())
}

#[derive(Debug, Clone)]
pub struct DdpgOptimizers {
    pub policy: ApproxOptimizer,
    pub q1: ApproxOptimizer,
}

impl DdpgOptimizers {
    pub fn new(nets: &DdpgNets, lr: f64) -> Self {
        Self { policy: ApproxOptimizer::new(&nets.policy, lr), q1: ApproxOptimizer::new(&nets.q1, lr) }
    }
}

/// Critic descent, actor ascent on `Q(s, μ(s))`, then both target updates.
pub fn ddpg_train_step(
    nets: &mut DdpgNets,
    buf: &ReplayBuffer,
    cfg: &SacConfig,
    opt: &mut DdpgOptimizers,
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
    let y = ddpg_targets(&batch, nets, cfg.gamma)?;
    let q1_loss = q_descent(&batch, &mut nets.q1, &mut opt.q1, &y)?;

    let n = batch.len();
    let raw = nets.policy.forward_state(&batch.obs)?;
    let actions = squashed_actions(&raw);
    let q = nets.q1.forward_head_for_action_grad(&batch.obs, &actions)?;
    let policy_loss = -q.iter().sum::<f64>() / n as f64;
    let da = nets.q1.action_grad(&Tensor::new(vec![n, 1], vec![-1.0 / n as f64; n])?)?;
    let mut grad = Vec::with_capacity(2 * n);
    for (r, g) in raw.rows().zip(&da) {
        let t0 = r[0].tanh();
        let t1 = r[1].tanh();
        grad.push(g[0] * 0.5 * (1.0 - t0 * t0));
        grad.push(g[1] * (1.0 - t1 * t1));
    }
    nets.policy.backward(&Tensor::new(vec![n, 2], grad)?)?;
    opt.policy.step(&mut nets.policy)?;

    soft_update(&mut nets.q1_target, &nets.q1, cfg.rho)?;
    soft_update(&mut nets.policy_target, &nets.policy, cfg.rho)?;
    let mean_target = y.iter().sum::<f64>() / n as f64;
    Ok(TrainDiagnostics { q1_loss, q2_loss: None, policy_loss, mean_target })
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub cfg: SacConfig,
    pub nets: DdpgNets,
    pub opt: DdpgOptimizers,
}

impl DdpgAgent {
    pub fn new(cfg: SacConfig, net_cfg: &NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let nets = DdpgNets::new(net_cfg, rng)?;
        let opt = DdpgOptimizers::new(&nets, cfg.lr);
        Ok(Self { cfg, nets, opt })
    }

    pub fn act(&self, obs: &Observation, mode: ActionMode, rng: &mut impl Rng) -> Result<Action> {
        ddpg_action(&self.nets.policy, obs, mode, self.cfg.exploration_noise, rng)
    }

    pub fn train_step(&mut self, buf: &ReplayBuffer, rng: &mut impl Rng) -> Result<TrainDiagnostics> {
        ddpg_train_step(&mut self.nets, buf, &self.cfg, &mut self.opt, rng)
    }

    /// Critic loss on a batch against the current targets, without updating.
    pub fn critic_loss(&self, batch: &Batch) -> Result<f64> {
        let y = ddpg_targets(batch, &self.nets, self.cfg.gamma)?;
        Ok(half_mse(&self.nets.q1.infer_q(&batch.obs, &batch.actions)?, &y))
    }

    pub fn add_to_checkpoint(&self, ck: &mut Checkpoint, with_optimizer: bool) -> Result<()> {
        for a in self.nets.all() {
            a.add_to_checkpoint(ck)?;
        }
        if with_optimizer {
            self.opt.policy.add_to_checkpoint(&self.nets.policy, ck)?;
            self.opt.q1.add_to_checkpoint(&self.nets.q1, ck)?;
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
        }
        Ok(())
    }
}
