//! SAC and DDPG learners, the replay buffer, and squashed-Gaussian action handling.

pub mod ddpg;
pub mod nets;
pub mod policy;
pub mod replay;
pub mod sac;

pub use ddpg::{ddpg_action, ddpg_targets, ddpg_train_step, DdpgAgent, DdpgNets, DdpgOptimizers};
pub use nets::{approximator_gradient_check, head_layers, ApproxOptimizer, Approximator, NetworkConfig};
pub use policy::{entropy, squash, tanh_gaussian_log_prob, ActionMode, SquashedSample, LOG_STD_MAX, LOG_STD_MIN};
pub use replay::{ReplayBuffer, Transition, DEFAULT_CAPACITY};
pub use sac::{
    compute_q_target, draw_noise, half_mse, policy_loss, policy_objective, q_descent, q_loss, sac_train_step,
    sample_action, soft_target, soft_update, Batch, QTargets, SacAgent, SacConfig, SacNets, SacOptimizers,
    TrainDiagnostics,
};
