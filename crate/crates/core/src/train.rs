//! Run configuration, the episode loop, checkpoints, and evaluation runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use diffnet::Checkpoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::action::Action;
use crate::agents::{ActionMode, DdpgAgent, NetworkConfig, ReplayBuffer, SacAgent, SacConfig, TrainDiagnostics, Transition};
use crate::drivesim::{generate_route, DoneReason, DriveEnv, EnvConfig, RouteParams, RouteSpec, TraceRecord};
use crate::error::{contract, CoreError, Result};
use crate::evalkit::{csv_err, interpolate_waypoints, route_rmse, EvalReport, RouteResult};
use crate::fusion::Modality;
use crate::observation::Observation;

pub const REWARDS_FILE: &str = "rewards.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const BASELINE_FILE: &str = "baseline.json";
pub const LATEST_DIR: &str = "checkpoints/latest";
pub const BEST_DIR: &str = "checkpoints/best";
pub const EVAL_DIR: &str = "eval";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sac,
    Ddpg,
}

/// Training and held-out routes, generated from seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutePool {
    pub params: RouteParams,
    pub train_seeds: Vec<u64>,
    pub eval_seeds: Vec<u64>,
}

impl Default for RoutePool {
    fn default() -> Self {
        Self { params: RouteParams::default(), train_seeds: (0..8).collect(), eval_seeds: (1000..1025).collect() }
    }
}

impl RoutePool {
    pub fn train_routes(&self) -> Result<Vec<RouteSpec>> {
        self.train_seeds.iter().map(|&s| generate_route(s, &self.params)).collect()
    }

    pub fn eval_routes(&self) -> Result<Vec<RouteSpec>> {
        self.eval_seeds.iter().map(|&s| generate_route(s, &self.params)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// `image` zeroes the tracking input, `sensor` zeroes the image input.
    pub modality: Modality,
    pub agent: SacConfig,
    pub network: NetworkConfig,
    pub env: EnvConfig,
    pub routes: RoutePool,
    pub episodes: usize,
    pub seed: u64,
    pub replay_capacity: usize,
    /// Episodes between `latest` checkpoint writes (the final one is always written).
    pub checkpoint_every: usize,
    /// Uniform-random-action episodes used to measure the baseline return.
    pub baseline_episodes: usize,
    /// Reference-path resolution for RMSE evaluation (m).
    pub eval_resolution: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Sac,
            modality: Modality::Fusion,
            agent: SacConfig::default(),
            network: NetworkConfig::default(),
            env: EnvConfig::default(),
            routes: RoutePool::default(),
            episodes: 400,
            seed: 0,
            replay_capacity: crate::agents::DEFAULT_CAPACITY,
            checkpoint_every: 25,
            baseline_episodes: 20,
            eval_resolution: 0.1,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        self.network.validate()?;
        self.env.validate()?;
        self.routes.params.validate()?;
        let (r, e) = (&self.env.render, &self.network.encoder);
        if (r.height, r.width) != (e.height, e.width) {
            return contract(format!(
                "rendered image {}×{} does not match encoder input {}×{}",
                r.height, r.width, e.height, e.width
            ));
        }
        if self.routes.train_seeds.is_empty() {
            return contract("route pool has no training routes");
        }
        if self.replay_capacity < self.agent.batch_size {
            return contract("replay capacity is smaller than the batch size");
        }
        if self.checkpoint_every == 0 {
            return contract("checkpoint interval must be positive");
        }
        if !(self.eval_resolution > 0.0) {
            return contract("evaluation resolution must be positive");
        }
        Ok(())
    }

    /// Network configuration with the run's input masking applied.
    pub fn network_config(&self) -> NetworkConfig {
        let mut n = self.network.clone();
        n.encoder.modality = self.modality;
        n
    }

    pub fn label(&self) -> String {
        let m = match self.modality {
            Modality::Fusion => "fusion",
            Modality::Image => "image",
            Modality::Sensor => "sensor",
        };
        let a = match self.algorithm {
            Algorithm::Sac => "sac",
            Algorithm::Ddpg => "ddpg",
        };
        format!("{m}-{a}")
    }
}

/// Either learner behind one interface.
#[derive(Debug, Clone)]
pub enum Agent {
    Sac(SacAgent),
    Ddpg(DdpgAgent),
}

impl Agent {
    pub fn new(cfg: &RunConfig, rng: &mut impl Rng) -> Result<Self> {
        let net = cfg.network_config();
        Ok(match cfg.algorithm {
            Algorithm::Sac => Agent::Sac(SacAgent::new(cfg.agent.clone(), &net, rng)?),
            Algorithm::Ddpg => Agent::Ddpg(DdpgAgent::new(cfg.agent.clone(), &net, rng)?),
        })
    }

    pub fn act(&self, obs: &Observation, mode: ActionMode, rng: &mut impl Rng) -> Result<Action> {
        match self {
            Agent::Sac(a) => a.act(obs, mode, rng),
            Agent::Ddpg(a) => a.act(obs, mode, rng),
        }
    }

    pub fn train_step(&mut self, buf: &ReplayBuffer, rng: &mut impl Rng) -> Result<TrainDiagnostics> {
        match self {
            Agent::Sac(a) => a.train_step(buf, rng),
            Agent::Ddpg(a) => a.train_step(buf, rng),
        }
    }

    pub fn add_to_checkpoint(&self, ck: &mut Checkpoint, with_optimizer: bool) -> Result<()> {
        match self {
            Agent::Sac(a) => a.add_to_checkpoint(ck, with_optimizer),
            Agent::Ddpg(a) => a.add_to_checkpoint(ck, with_optimizer),
        }
    }

    pub fn load_from_checkpoint(&mut self, ck: &Checkpoint, with_optimizer: bool) -> Result<()> {
        match self {
            Agent::Sac(a) => a.load_from_checkpoint(ck, with_optimizer),
            Agent::Ddpg(a) => a.load_from_checkpoint(ck, with_optimizer),
        }
    }

    /// `(name, shape)` of every network parameter.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        match self {
            Agent::Sac(a) => a.nets.all().iter().flat_map(|n| n.param_shapes()).collect(),
            Agent::Ddpg(a) => a.nets.all().iter().flat_map(|n| n.param_shapes()).collect(),
        }
    }

    /// Loads weights, refusing with a parameter-name diff when shapes disagree.
    pub fn load_weights_checked(&mut self, ck: &Checkpoint) -> Result<()> {
        let expected = self.param_shapes();
        let compatible = expected.iter().all(|(n, s)| ck.get(n).is_some_and(|(shape, _)| shape == s.as_slice()));
        if !compatible {
            return Err(CoreError::Contract(format!(
                "checkpoint does not match the network:\n{}",
                ck.diff_against(&expected, false)
            )));
        }
        self.load_from_checkpoint(ck, false)
    }
}

/// Independent random stream for one episode, so episode `k` depends only
/// on the seed, `k`, the weights and the replay contents.
pub fn episode_rng(seed: u64, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64 + 1);
    rng
}

fn uniform_action(rng: &mut impl Rng) -> Action {
    Action::clamped(rng.random_range(0.0..=1.0), rng.random_range(-1.0..=1.0))
}

/// One row of the reward curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Environment steps taken so far, including this episode.
    pub env_steps: u64,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub steps: usize,
    /// Return divided by the episode's step count.
    pub avg_reward: f64,
    pub done_reason: DoneReason,
    pub q1_loss: Option<f64>,
    /// Empty for the single-critic baseline.
    pub q2_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub mean_target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub episodes: usize,
    pub env_steps: u64,
    pub baseline_return: f64,
    pub best_return: Option<f64>,
    pub final_window_mean: Option<f64>,
    pub report: Option<EvalReport>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Exact bytes of the config file, copied into the run directory.
    pub config_bytes: Option<Vec<u8>>,
    /// Evaluate the final policy on the held-out routes after training.
    pub evaluate: bool,
    /// Print one progress line every this many episodes (0 disables).
    pub log_every: usize,
}

/// Mean return of uniformly random actions on the training routes.
pub fn random_baseline(cfg: &RunConfig) -> Result<f64> {
    let routes = cfg.routes.train_routes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let mut total = 0.0;
    let n = cfg.baseline_episodes.max(1);
    for k in 0..n {
        let mut env = DriveEnv::new(cfg.env.clone(), routes[k % routes.len()].clone())?;
        env.reset();
        loop {
            let r = env.step(uniform_action(&mut rng))?;
            total += r.reward;
            if r.done {
                break;
            }
        }
    }
    Ok(total / n as f64)
}

struct RunState {
    agent: Agent,
    episode: usize,
    env_steps: u64,
    best_return: Option<f64>,
}

fn checkpoint_meta(cfg: &RunConfig, st: &RunState, kind: &str) -> serde_json::Value {
    json!({
        "kind": kind,
        "config": cfg,
        "episode": st.episode,
        "env_steps": st.env_steps,
        "best_return": st.best_return,
    })
}

fn save_checkpoint(dir: &Path, cfg: &RunConfig, st: &RunState, kind: &str, with_optimizer: bool) -> Result<()> {
    let mut ck = Checkpoint::new(checkpoint_meta(cfg, st, kind));
    st.agent.add_to_checkpoint(&mut ck, with_optimizer)?;
    ck.save(dir)?;
    Ok(())
}

/// Run configuration stored in a checkpoint's metadata.
pub fn checkpoint_config(ck: &Checkpoint) -> Result<RunConfig> {
    let cfg = ck.meta.get("config").ok_or_else(|| CoreError::Contract("checkpoint carries no run config".into()))?;
    Ok(serde_json::from_value(cfg.clone())?)
}

/// Rebuilds the agent stored in a checkpoint directory (weights only).
pub fn load_agent(dir: &Path) -> Result<(RunConfig, Agent)> {
    let ck = Checkpoint::load(dir)?;
    let cfg = checkpoint_config(&ck)?;
    cfg.validate()?;
    let mut agent = Agent::new(&cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    agent.load_weights_checked(&ck)?;
    Ok((cfg, agent))
}

fn resume_or_start(cfg: &RunConfig, out: &Path) -> Result<RunState> {
    let latest = out.join(LATEST_DIR);
    let mut agent = Agent::new(cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    if !latest.exists() {
        return Ok(RunState { agent, episode: 0, env_steps: 0, best_return: None });
    }
    let ck = Checkpoint::load(&latest)?;
    let stored = checkpoint_config(&ck)?;
    if stored != *cfg {
        return contract(format!(
            "{} holds a run with a different configuration; refusing to resume",
            out.display()
        ));
    }
    agent.load_from_checkpoint(&ck, true)?;
    let num = |k: &str| ck.meta.get(k).and_then(|v| v.as_u64()).unwrap_or(0);
    Ok(RunState {
        agent,
        episode: num("episode") as usize,
        env_steps: num("env_steps"),
        best_return: ck.meta.get("best_return").and_then(|v| v.as_f64()),
    })
}

/// Keeps the header and the first `episodes` rows of an existing reward curve.
fn truncate_rewards(path: &Path, episodes: usize) -> Result<()> {
    let text = fs::read_to_string(path)?;
    let kept: Vec<&str> = text.lines().take(episodes + 1).collect();
    fs::write(path, kept.join("\n") + "\n")?;
    Ok(())
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Trains per the config, writing everything under `out`:
/// `config.json`, `rewards.csv`, `baseline.json`, `checkpoints/{latest,best}`
/// and, with `opts.evaluate`, `eval/`. A directory that already holds a run
/// with the same configuration is resumed from its latest checkpoint (the
/// replay buffer starts empty again); a different configuration is refused.
pub fn train(cfg: &RunConfig, out: &Path, opts: &TrainOptions) -> Result<TrainSummary> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut st = resume_or_start(cfg, out)?;
    match &opts.config_bytes {
        Some(bytes) => fs::write(out.join(CONFIG_FILE), bytes)?,
        None => fs::write(out.join(CONFIG_FILE), serde_json::to_string_pretty(cfg)? + "\n")?,
    }

    let baseline_return = random_baseline(cfg)?;
    fs::write(out.join(BASELINE_FILE), serde_json::to_string_pretty(&json!({ "mean_return": baseline_return }))? + "\n")?;

    let rewards_path = out.join(REWARDS_FILE);
    let resumed = st.episode > 0 && rewards_path.exists();
    if resumed {
        truncate_rewards(&rewards_path, st.episode)?;
    }
    let file = fs::OpenOptions::new().create(true).append(resumed).write(true).truncate(!resumed).open(&rewards_path)?;
    let mut writer = csv::WriterBuilder::new().has_headers(!resumed).from_writer(file);
    if st.episode == 0 {
        if cfg.episodes == 0 {
            // Header only.
            writer.write_record(REWARD_COLUMNS).map_err(csv_err)?;
        }
        save_checkpoint(&out.join(LATEST_DIR), cfg, &st, "latest", true)?;
    }

    let routes = cfg.routes.train_routes()?;
    let mut buf = ReplayBuffer::new(cfg.replay_capacity)?;
    let mut returns = Vec::new();
    while st.episode < cfg.episodes {
        let log = run_episode(cfg, &routes, &mut st, &mut buf)?;
        writer.serialize(&log).map_err(csv_err)?;
        writer.flush()?;
        returns.push(log.episode_return);
        if st.best_return.is_none_or(|b| log.episode_return > b) {
            st.best_return = Some(log.episode_return);
            save_checkpoint(&out.join(BEST_DIR), cfg, &st, "best", false)?;
        }
        if st.episode % cfg.checkpoint_every == 0 || st.episode == cfg.episodes {
            save_checkpoint(&out.join(LATEST_DIR), cfg, &st, "latest", true)?;
        }
        if opts.log_every > 0 && st.episode % opts.log_every == 0 {
            let window = &returns[returns.len().saturating_sub(opts.log_every)..];
            eprintln!(
                "episode {:>5}  env steps {:>8}  mean return (last {}) {:>10.2}",
                st.episode,
                st.env_steps,
                window.len(),
                window.iter().sum::<f64>() / window.len() as f64
            );
        }
    }
    drop(writer);

    let all_returns = read_returns(&rewards_path)?;
    let tail = &all_returns[all_returns.len().saturating_sub(50)..];
    let final_window_mean = (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64);
    let report = if opts.evaluate && !cfg.routes.eval_seeds.is_empty() {
        let routes = cfg.routes.eval_routes()?;
        let report = evaluate(&st.agent, &cfg.label(), &routes, &cfg.env, cfg.eval_resolution, Some(&out.join(EVAL_DIR)))?;
        report.write(&out.join(EVAL_DIR))?;
        Some(report)
    } else {
        None
    };
    Ok(TrainSummary {
        episodes: st.episode,
        env_steps: st.env_steps,
        baseline_return,
        best_return: st.best_return,
        final_window_mean,
        report,
    })
}

pub const REWARD_COLUMNS: [&str; 10] = [
    "episode",
    "env_steps",
    "return",
    "steps",
    "avg_reward",
    "done_reason",
    "q1_loss",
    "q2_loss",
    "policy_loss",
    "mean_target",
];

/// Episode returns in file order.
pub fn read_returns(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize::<EpisodeLog>().map(|row| row.map(|l| l.episode_return).map_err(csv_err)).collect()
}

fn run_episode(cfg: &RunConfig, routes: &[RouteSpec], st: &mut RunState, buf: &mut ReplayBuffer) -> Result<EpisodeLog> {
    let mut rng = episode_rng(cfg.seed, st.episode);
    let route = routes[rng.random_range(0..routes.len())].clone();
    let mut env_cfg = cfg.env.clone();
    env_cfg.noise.seed = rng.random();
    let mut env = DriveEnv::new(env_cfg, route)?;
    let mut obs = Arc::new(env.reset());
    let mut ret = 0.0;
    let done_reason = loop {
        let action = if st.env_steps < cfg.agent.warmup_steps as u64 {
            uniform_action(&mut rng)
        } else {
            st.agent.act(&obs, ActionMode::Stochastic, &mut rng)?
        };
        let r = env.step(action)?;
        st.env_steps += 1;
        ret += r.reward;
        let next = Arc::new(r.observation);
        // A timeout truncates the episode; the state itself is not terminal.
        let terminal = matches!(r.done_reason, DoneReason::CollisionOrLaneDeparture | DoneReason::GoalReached);
        buf.push(Transition { obs: obs.clone(), action, reward: r.reward, next_obs: next.clone(), done: terminal })?;
        obs = next;
        if r.done {
            break r.done_reason;
        }
    };
    let steps = env.steps();

    let mut diags = Vec::new();
    if st.env_steps >= cfg.agent.warmup_steps as u64 && buf.len() >= cfg.agent.batch_size {
        let n = cfg.agent.gradient_steps_per_episode.unwrap_or(steps);
        for _ in 0..n {
            diags.push(st.agent.train_step(buf, &mut rng)?);
        }
    }
    st.episode += 1;
    Ok(EpisodeLog {
        episode: st.episode,
        env_steps: st.env_steps,
        episode_return: ret,
        steps,
        avg_reward: ret / steps as f64,
        done_reason,
        q1_loss: mean_of(diags.iter().map(|d| Some(d.q1_loss))),
        q2_loss: mean_of(diags.iter().map(|d| d.q2_loss)),
        policy_loss: mean_of(diags.iter().map(|d| Some(d.policy_loss))),
        mean_target: mean_of(diags.iter().map(|d| Some(d.mean_target))),
    })
}

/// Drives one route with `policy`, returning the outcome and the per-step trace.
pub fn drive_route(
    route: &RouteSpec,
    env_cfg: &EnvConfig,
    resolution: f64,
    mut policy: impl FnMut(&DriveEnv, &Observation) -> Result<Action>,
) -> Result<(RouteResult, Vec<TraceRecord>)> {
    let mut env = DriveEnv::new(env_cfg.clone(), route.clone())?;
    let mut obs = env.reset();
    let mut trace = Vec::new();
    let mut ret = 0.0;
    let reason = loop {
        let action = policy(&env, &obs)?;
        let r = env.step(action)?;
        ret += r.reward;
        trace.push(TraceRecord::new(env.steps(), action, &r));
        obs = r.observation;
        if r.done {
            break r.done_reason;
        }
    };
    let path = interpolate_waypoints(route, resolution)?;
    let positions: Vec<[f64; 2]> = trace.iter().map(|t| [t.x, t.y]).collect();
    let result = RouteResult {
        route: 0,
        rmse: route_rmse(&positions, &path)?,
        completed: reason == DoneReason::GoalReached,
        steps: trace.len(),
        episode_return: ret,
    };
    Ok((result, trace))
}

fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut text = String::new();
    for rec in trace {
        text.push_str(&serde_json::to_string(rec)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Deterministic-mode evaluation on every route; traces go to
/// `{trace_dir}/traces/route_NNN.jsonl` when a directory is given.
pub fn evaluate(
    agent: &Agent,
    label: &str,
    routes: &[RouteSpec],
    env_cfg: &EnvConfig,
    resolution: f64,
    trace_dir: Option<&Path>,
) -> Result<EvalReport> {
    if routes.is_empty() {
        return contract("evaluation needs at least one route");
    }
    let traces: Option<PathBuf> = trace_dir.map(|d| d.join("traces"));
    if let Some(d) = &traces {
        fs::create_dir_all(d)?;
    }
    // Deterministic mode draws no randomness; the generator only satisfies the signature.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut results = Vec::with_capacity(routes.len());
    for (i, route) in routes.iter().enumerate() {
        let (mut res, trace) =
            drive_route(route, env_cfg, resolution, |_, obs| agent.act(obs, ActionMode::Deterministic, &mut rng))?;
        res.route = i;
        if let Some(d) = &traces {
            write_trace(&d.join(format!("route_{i:03}.jsonl")), &trace)?;
        }
        results.push(res);
    }
    EvalReport::new(label, results)
}

/// Exponential smoothing `s₁ = x₁`, `sₖ = α·sₖ₋₁ + (1 − α)·xₖ`.
pub fn smooth(values: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    for &x in values {
        let s = match out.last() {
            Some(&prev) => alpha * prev + (1.0 - alpha) * x,
            None => x,
        };
        out.push(s);
    }
    out
}

pub const CURVE_FILE: &str = "curve.csv";

#[derive(Serialize)]
struct CurveRow {
    episode: usize,
    #[serde(rename = "return")]
    episode_return: f64,
    avg_reward: f64,
    smoothed_return: f64,
    smoothed_avg_reward: f64,
}

/// Writes `curve.csv` next to the run's reward curve, adding smoothed
/// return and smoothed per-step reward columns.
pub fn export_curve(run: &Path, alpha: f64) -> Result<PathBuf> {
    if !(0.0..1.0).contains(&alpha) {
        return contract(format!("smoothing factor {alpha} outside [0, 1)"));
    }
    let src = run.join(REWARDS_FILE);
    if !src.exists() {
        return contract(format!("{} has no {REWARDS_FILE}", run.display()));
    }
    let mut r = csv::Reader::from_path(&src).map_err(csv_err)?;
    let rows: Vec<EpisodeLog> = r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)?;
    let returns: Vec<f64> = rows.iter().map(|l| l.episode_return).collect();
    let avgs: Vec<f64> = rows.iter().map(|l| l.avg_reward).collect();
    let (sr, sa) = (smooth(&returns, alpha), smooth(&avgs, alpha));
    let dst = run.join(CURVE_FILE);
    let mut w = csv::Writer::from_path(&dst).map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record(["episode", "return", "avg_reward", "smoothed_return", "smoothed_avg_reward"]).map_err(csv_err)?;
    }
    for (i, l) in rows.iter().enumerate() {
        w.serialize(CurveRow {
            episode: l.episode,
            episode_return: l.episode_return,
            avg_reward: l.avg_reward,
            smoothed_return: sr[i],
            smoothed_avg_reward: sa[i],
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(dst)
}
