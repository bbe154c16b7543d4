//! Self-contained property suites behind the `verify` command: gradient
//! checks, reward arithmetic, target computation, and replay statistics.

use std::fmt;
use std::sync::Arc;

use diffnet::{finite_difference_report, BranchSpec, GradCheckReport, GradFault, LayerSpec, Net, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::action::Action;
use crate::agents::{approximator_gradient_check, soft_target, Approximator, NetworkConfig, ReplayBuffer, Transition};
use crate::drivesim::{reward, DoneReason, DriveEnv, EnvConfig, RenderConfig, RouteSpec, VehicleState};
use crate::error::{contract, Result};
use crate::fusion::{EncoderConfig, FusionEncoder, Modality};
use crate::observation::{Observation, TRACKING_LEN};

/// Step size of every central difference in the gradient suite.
pub const GRAD_EPS: f64 = 1e-5;
/// Largest accepted relative gradient error.
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_SEEDS: u64 = 20;

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Corrupts one backward rule in every network the gradient suite builds.
    pub fault: Option<GradFault>,
}

pub fn parse_fault(name: &str) -> Result<GradFault> {
    match name {
        "relu-sign" => Ok(GradFault::ReluSign),
        "dense-weight-sign" => Ok(GradFault::DenseWeightSign),
        "conv-weight-sign" => Ok(GradFault::ConvWeightSign),
        other => contract(format!("unknown fault {other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub max_error: f64,
    pub detail: String,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {:<10} max error {:.3e}  {}", self.name, self.max_error, self.detail)
    }
}

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<SuiteResult>> {
    Ok(vec![gradient_suite(opts)?, reward_suite()?, target_suite()?, buffer_suite()?])
}

fn random_tensor(rng: &mut ChaCha8Rng, batch: usize, len: usize) -> Tensor {
    Tensor::new(vec![batch, len], (0..batch * len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("consistent shape")
}

/// Random in-range observation of the given image size.
pub fn random_observation(rng: &mut impl Rng, height: usize, width: usize) -> Observation {
    let image = (0..height * width).map(|_| rng.random_range(0.0..=1.0)).collect();
    let mut tracking = [0.0; TRACKING_LEN];
    tracking.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    Observation::new(height, width, image, tracking).expect("in-range observation")
}

/// One stack per layer kind, each ending in a dense readout.
pub fn layer_kind_stacks() -> Vec<(&'static str, Vec<usize>, Vec<LayerSpec>)> {
    vec![
        (
            "dense+tanh",
            vec![6],
            vec![LayerSpec::Dense { inputs: 6, outputs: 5 }, LayerSpec::Tanh, LayerSpec::Dense { inputs: 5, outputs: 3 }],
        ),
        (
            "conv+relu+flatten",
            vec![2, 6, 6],
            vec![
                LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 2 },
                LayerSpec::Relu,
                LayerSpec::Conv2d { in_channels: 3, out_channels: 2, kernel: 3, stride: 1 },
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 18, outputs: 3 },
            ],
        ),
        (
            "residual",
            vec![1, 8, 8],
            vec![
                LayerSpec::ResidualBlock { in_channels: 1, out_channels: 3, stride: 2 },
                LayerSpec::Relu,
                LayerSpec::ResidualBlock { in_channels: 3, out_channels: 3, stride: 1 },
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 48, outputs: 4 },
            ],
        ),
        (
            "concat",
            vec![21],
            vec![
                LayerSpec::Concat(vec![
                    BranchSpec {
                        name: "img".into(),
                        shape: vec![1, 4, 4],
                        layers: vec![
                            LayerSpec::ResidualBlock { in_channels: 1, out_channels: 2, stride: 2 },
                            LayerSpec::Flatten,
                            LayerSpec::Dense { inputs: 8, outputs: 5 },
                        ],
                    },
                    BranchSpec {
                        name: "vec".into(),
                        shape: vec![3],
                        layers: vec![LayerSpec::Dense { inputs: 3, outputs: 4 }],
                    },
                    BranchSpec { name: "pass".into(), shape: vec![2], layers: vec![] },
                ]),
                LayerSpec::Dense { inputs: 11, outputs: 6 },
                LayerSpec::Relu,
                LayerSpec::Dense { inputs: 6, outputs: 2 },
            ],
        ),
    ]
}

/// Architecture used for the whole-encoder and head checks: the full
/// three-block encoder structure on an 8×8 image with narrow heads.
pub fn verification_network() -> NetworkConfig {
    NetworkConfig {
        encoder: EncoderConfig { height: 8, width: 8, channels: vec![2, 3, 4], modality: Modality::Fusion },
        hidden: 12,
    }
}

/// Reports of seeds `0..seeds` merged into one, worst parameters tagged with their seed.
fn merge_seeds(reports: impl Iterator<Item = Result<(u64, GradCheckReport)>>) -> Result<GradCheckReport> {
    let mut merged = GradCheckReport::empty();
    for r in reports {
        let (seed, rep) = r?;
        merged.merge(&rep, &format!("seed {seed} "));
    }
    Ok(merged)
}

/// Per-target reports over `0..seeds`: every layer kind, the full encoder,
/// and encoder+head for the policy (4 outputs) and a critic.
pub fn gradient_checks(opts: &VerifyOptions, seeds: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let mut out = Vec::new();
    for (name, shape, specs) in layer_kind_stacks() {
        let rep = merge_seeds((0..seeds).map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = Net::new("g", &shape, &specs, &mut rng)?;
            net.set_fault(opts.fault);
            let x = random_tensor(&mut rng, 2, shape.iter().product());
            Ok((seed, finite_difference_report(&mut net, &x, GRAD_EPS)?))
        }))?;
        out.push((name.to_string(), rep));
    }
    let net_cfg = verification_network();
    let enc = &net_cfg.encoder;
    let rep = merge_seeds((0..seeds).map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = FusionEncoder::new("enc", enc.clone(), &mut rng)?;
        e.net_mut().set_fault(opts.fault);
        let obs: Vec<Observation> = (0..2).map(|_| random_observation(&mut rng, enc.height, enc.width)).collect();
        let refs: Vec<&Observation> = obs.iter().collect();
        let x = e.input(&refs)?;
        Ok((seed, finite_difference_report(e.net_mut(), &x, GRAD_EPS)?))
    }))?;
    out.push(("fusion encoder".to_string(), rep));
    for critic in [false, true] {
        let rep = merge_seeds((0..seeds).map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = if critic {
                Approximator::critic("q", &net_cfg, &mut rng)?
            } else {
                Approximator::state_head("policy", &net_cfg, 4, &mut rng)?
            };
            a.encoder_mut().net_mut().set_fault(opts.fault);
            a.head_mut().set_fault(opts.fault);
            let obs: Vec<Observation> = (0..2).map(|_| random_observation(&mut rng, enc.height, enc.width)).collect();
            let refs: Vec<&Observation> = obs.iter().collect();
            let actions: Vec<[f64; 2]> =
                (0..2).map(|_| [rng.random_range(0.0..=1.0), rng.random_range(-1.0..=1.0)]).collect();
            let acts = critic.then_some(actions.as_slice());
            Ok((seed, approximator_gradient_check(&mut a, &refs, acts, GRAD_EPS)?))
        }))?;
        out.push((if critic { "critic" } else { "policy" }.to_string(), rep));
    }
    Ok(out)
}

/// Passes when every relative error is below [`GRAD_TOL`]. The detail also
/// lists the error left after discounting each difference quotient's
/// floating-point resolution, and how many parameters fail only within it.
pub fn gradient_suite(opts: &VerifyOptions) -> Result<SuiteResult> {
    let checks = gradient_checks(opts, GRAD_SEEDS)?;
    let max_error = checks.iter().map(|c| c.1.max_relative_error).fold(0.0, f64::max);
    let detail = checks
        .iter()
        .map(|(n, r)| {
            format!(
                "{n} {:.1e} (resolved {:.1e}, {} within roundoff)",
                r.max_relative_error, r.max_resolved_error, r.below_resolution
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(SuiteResult { name: "gradients", passed: max_error < GRAD_TOL, max_error, detail })
}

fn straight_route() -> Result<RouteSpec> {
    RouteSpec::new(vec![[0.0, 0.0], [20.0, 0.0], [40.0, 0.0]], 1.75, 2.0)
}

fn small_env() -> EnvConfig {
    EnvConfig { render: RenderConfig { height: 8, width: 8, ..RenderConfig::default() }, ..EnvConfig::default() }
}

/// Per-step reward hand values and the two terminal rewards.
pub fn reward_suite() -> Result<SuiteResult> {
    use std::f64::consts::FRAC_PI_2;
    let cases = [
        (reward(5.0, 0.0, 0.0), 5.0),
        (reward(5.0, FRAC_PI_2, 0.5), -7.5),
        (reward(0.0, 1.0, 0.3), 0.0),
    ];
    let mut max_error = cases.iter().map(|(got, want)| (got - want).abs()).fold(0.0, f64::max);
    let mut ok = max_error < 1e-12;

    let mut env = DriveEnv::new(small_env(), straight_route()?)?;
    env.reset();
    env.set_state(VehicleState { x: 10.0, y: 1.8, heading: 0.0, speed: 0.0 });
    let r = env.step(Action::new(0.0, 0.0)?)?;
    ok &= r.reward == -200.0 && r.done_reason == DoneReason::CollisionOrLaneDeparture;
    max_error = max_error.max((r.reward + 200.0).abs());

    env.reset();
    env.set_state(VehicleState { x: 38.5, y: 0.0, heading: 0.0, speed: 0.0 });
    let r = env.step(Action::new(0.0, 0.0)?)?;
    ok &= r.reward == 100.0 && r.done_reason == DoneReason::GoalReached;
    max_error = max_error.max((r.reward - 100.0).abs());
    Ok(SuiteResult { name: "reward", passed: ok, max_error, detail: "per-step cases and terminals".into() })
}

/// Target arithmetic and soft-update geometry.
pub fn target_suite() -> Result<SuiteResult> {
    let y = soft_target(1.0, false, 0.99, 0.5, 2.0, 3.0, -1.0);
    let mut max_error = (y - 3.475).abs();
    let terminal_exact = soft_target(-200.0, true, 0.99, 0.2, 5.0, 7.0, -1.0) == -200.0;

    let net_cfg = NetworkConfig {
        encoder: EncoderConfig { height: 8, width: 8, channels: vec![2, 3], modality: Modality::Fusion },
        hidden: 8,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let online = Approximator::critic("q", &net_cfg, &mut rng)?;
    let mut target = Approximator::critic("q_target", &net_cfg, &mut rng)?;
    let d0 = target.distance(&online)?;
    let rho: f64 = 0.9;
    for n in 1..=100 {
        target.soft_update_from(&online, rho)?;
        let expected = rho.powi(n) * d0;
        max_error = max_error.max((target.distance(&online)? - expected).abs());
    }
    let passed = terminal_exact && max_error < 1e-10;
    Ok(SuiteResult { name: "targets", passed, max_error, detail: format!("initial target distance {d0:.3}") })
}

fn scalar_obs(v: f64) -> Arc<Observation> {
    let mut t = [0.0; TRACKING_LEN];
    t[0] = v;
    Arc::new(Observation::new(1, 1, vec![0.0], t).expect("valid observation"))
}

/// FIFO eviction and a χ² test of sampling uniformity.
pub fn buffer_suite() -> Result<SuiteResult> {
    let mut buf = ReplayBuffer::new(10)?;
    for i in 0..25 {
        let o = scalar_obs(i as f64);
        buf.push(Transition { obs: o.clone(), action: Action::new(0.0, 0.0)?, reward: i as f64, next_obs: o, done: false })?;
    }
    let fifo = buf.len() == 10 && buf.iter().map(|t| t.reward).eq((15..25).map(|i| i as f64));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 100_000;
    let mut counts = [0usize; 10];
    for i in buf.sample_indices(draws, &mut rng)? {
        counts[i] += 1;
    }
    let expected = draws as f64 / 10.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(9.0).expect("positive degrees of freedom").cdf(stat);
    Ok(SuiteResult {
        name: "buffer",
        passed: fifo && p > 0.01,
        max_error: if fifo { 0.0 } else { 1.0 },
        detail: format!("FIFO {}, chi-square {stat:.2}, p {p:.3}", if fifo { "exact" } else { "broken" }),
    })
}
