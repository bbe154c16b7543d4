use std::sync::Arc;

use fusion_drive::agents::{
    compute_q_target, ddpg_action, ddpg_targets, draw_noise, entropy, half_mse, policy_objective, q_descent,
    sac_train_step, sample_action, soft_target, soft_update, tanh_gaussian_log_prob, ActionMode, Approximator,
    Batch, DdpgAgent, NetworkConfig, ReplayBuffer, SacConfig, SacNets, SacOptimizers, SquashedSample, Transition,
};
use fusion_drive::fusion::{append_actions, EncoderConfig, Modality};
use fusion_drive::{Action, Observation, TRACKING_LEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn tiny_net() -> NetworkConfig {
    NetworkConfig {
        encoder: EncoderConfig { height: 8, width: 8, channels: vec![2, 3, 4], modality: Modality::Fusion },
        hidden: 12,
    }
}

fn random_obs(rng: &mut ChaCha8Rng) -> Observation {
    let img = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut t = [0.0; TRACKING_LEN];
    t.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    Observation::new(8, 8, img, t).unwrap()
}

fn random_buffer(rng: &mut ChaCha8Rng, n: usize, done_every: usize) -> ReplayBuffer {
    let mut buf = ReplayBuffer::new(1000).unwrap();
    let mut prev = Arc::new(random_obs(rng));
    for i in 0..n {
        let next = Arc::new(random_obs(rng));
        let action = Action::new(rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0)).unwrap();
        let done = done_every > 0 && i % done_every == 0;
        buf.push(Transition { obs: prev, action, reward: rng.random_range(-1.0..1.0), next_obs: next.clone(), done })
            .unwrap();
        prev = next;
    }
    buf
}

/// Sets the final head layer to output constant `bias` values.
fn make_constant(a: &mut Approximator, bias: &[f64]) {
    let store = a.head_mut().params_mut();
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let (w, b) = (&names[names.len() - 2], &names[names.len() - 1]);
    store.get_mut(w).unwrap().value_mut().iter_mut().for_each(|v| *v = 0.0);
    store.get_mut(b).unwrap().value_mut().copy_from_slice(bias);
}

fn policy_store(n: &mut SacNets, which: usize) -> &mut diffnet::ParamStore {
    if which == 0 {
        n.policy.encoder_mut().net_mut().params_mut()
    } else {
        n.policy.head_mut().params_mut()
    }
}

fn snapshot(a: &Approximator) -> Vec<u64> {
    a.stores().iter().flat_map(|s| s.iter().flat_map(|(_, p)| p.value().iter().map(|v| v.to_bits())).collect::<Vec<_>>()).collect()
}

#[test]
fn entropy_values() {
    assert!((entropy(&[0.5, 0.5]).unwrap() - 0.6931).abs() < 1e-4);
    assert!((entropy(&[0.25; 4]).unwrap() - 1.3863).abs() < 1e-4);
}

#[test]
fn one_dimensional_squashed_density_integrates_to_one() {
    // Monte-Carlo over a ∈ (−1, 1): E_uniform[2·p(a)] with p(a) = N(atanh a)/(1 − a²).
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (mean, log_std) in [(0.0, 0.0), (0.4, -0.5), (-0.8, 0.3)] {
        let n = 400_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            acc += 2.0 * tanh_gaussian_log_prob(a.atanh(), mean, log_std).exp();
        }
        let integral = acc / n as f64;
        assert!((integral - 1.0).abs() < 0.02, "({mean}, {log_std}): {integral}");
    }
}

#[test]
fn two_dimensional_action_density_integrates_to_one() {
    // Over [0,1]×[−1,1] (area 2), the throttle rescaling term included.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mean, ls): ([f64; 2], [f64; 2]) = ([0.2, -0.3], [-0.3, -0.2]);
    let n = 400_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let thr: f64 = rng.random_range(0.0..1.0);
        let steer: f64 = rng.random_range(-1.0..1.0);
        let u = [(2.0 * thr - 1.0).atanh(), steer.atanh()];
        let noise = [(u[0] - mean[0]) / ls[0].exp(), (u[1] - mean[1]) / ls[1].exp()];
        acc += 2.0 * SquashedSample::new(mean, ls, noise).log_prob.exp();
    }
    let integral = acc / n as f64;
    assert!((integral - 1.0).abs() < 0.02, "{integral}");
}

#[test]
fn squashed_histogram_matches_density() {
    // Histogram of tanh(u) against the density integrated per bin (midpoint rule on a fine grid).
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mean, log_std): (f64, f64) = (0.3, -0.2);
    let bins = 10;
    let n = 200_000;
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let a = (mean + log_std.exp() * z).tanh();
        counts[(((a + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1)] += 1;
    }
    for (b, c) in counts.iter().enumerate() {
        let lo = -1.0 + 2.0 * b as f64 / bins as f64;
        let fine = 2000;
        let h = 2.0 / bins as f64 / fine as f64;
        let mass: f64 =
            (0..fine).map(|k| lo + (k as f64 + 0.5) * h).map(|a: f64| tanh_gaussian_log_prob(a.atanh(), mean, log_std).exp() * h).sum();
        let freq = *c as f64 / n as f64;
        assert!((freq - mass).abs() < 0.005, "bin {b}: {freq} vs {mass}");
    }
}

#[test]
fn stochastic_actions_stay_in_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
    let obs = random_obs(&mut rng);
    // Wide, offset distributions push samples into the saturated tails.
    for bias in [[0.0, 0.0, 0.0, 0.0], [5.0, -5.0, 2.0, 2.0], [-30.0, 30.0, 2.0, 2.0]] {
        make_constant(&mut nets.policy, &bias);
        for _ in 0..35_000 {
            let (a, lp) = sample_action(&nets.policy, &obs, ActionMode::Stochastic, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&a.throttle()) && (-1.0..=1.0).contains(&a.steer()), "{a:?}");
            assert!(!lp.is_nan());
        }
    }
    make_constant(&mut nets.policy, &[0.0; 4]);
    let (a, _) = sample_action(&nets.policy, &obs, ActionMode::Deterministic, &mut rng).unwrap();
    assert_eq!(a.to_array(), [0.5, 0.0]);
}

#[test]
fn replay_sampling_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let buf = random_buffer(&mut rng, 10, 0);
    let draws = 100_000;
    let mut counts = [0f64; 10];
    for i in buf.sample_indices(draws, &mut rng).unwrap() {
        counts[i] += 1.0;
    }
    let expected = draws as f64 / 10.0;
    let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(stat);
    assert!(p > 0.01, "chi2 {stat}, p {p}");
}

#[test]
fn soft_target_hand_values() {
    assert!((soft_target(1.0, false, 0.99, 0.5, 2.0, 3.0, -1.0) - 3.475).abs() < 1e-12);
    assert_eq!(soft_target(-200.0, true, 0.99, 0.5, 2.0, 3.0, -1.0), -200.0);
    assert_eq!(soft_target(1.0, false, 0.9, 0.0, 4.0, 4.0, -3.0), 1.0 + 0.9 * 4.0);
}

#[test]
fn network_targets_follow_the_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
    let buf = random_buffer(&mut rng, 16, 3);
    let ts: Vec<&Transition> = buf.iter().collect();
    let batch = Batch::from_transitions(&ts);
    let cfg = SacConfig { alpha: 0.3, ..SacConfig::default() };
    let t = compute_q_target(&batch, &nets, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    for i in 0..batch.len() {
        let expect = if batch.dones[i] {
            batch.rewards[i]
        } else {
            batch.rewards[i] + cfg.gamma * (t.target_q1[i].min(t.target_q2[i]) - cfg.alpha * t.next_log_probs[i])
        };
        assert!((t.y[i] - expect).abs() < 1e-12);
        if batch.dones[i] {
            assert_eq!(t.y[i], batch.rewards[i]);
        } else {
            // Clipped double-Q never exceeds either single-critic target.
            for q in [t.target_q1[i], t.target_q2[i]] {
                assert!(t.y[i] <= batch.rewards[i] + cfg.gamma * (q - cfg.alpha * t.next_log_probs[i]) + 1e-12);
            }
        }
    }
}

#[test]
fn larger_alpha_raises_targets_when_log_probs_are_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
    // A wide, centred policy; the assertion below confirms log π < 0 for these draws.
    make_constant(&mut nets.policy, &[0.0, 0.0, -0.5, -0.5]);
    let buf = random_buffer(&mut rng, 32, 0);
    let ts: Vec<&Transition> = buf.iter().collect();
    let batch = Batch::from_transitions(&ts);
    let mut prev: Option<Vec<f64>> = None;
    for alpha in [0.0, 0.1, 0.5, 1.0] {
        let cfg = SacConfig { alpha, ..SacConfig::default() };
        let t = compute_q_target(&batch, &nets, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(t.next_log_probs.iter().all(|lp| *lp < 0.0));
        if let Some(p) = prev {
            for i in 0..batch.len() {
                if batch.dones[i] {
                    assert_eq!(t.y[i], p[i]);
                } else {
                    // −α·log π is an entropy bonus here, so it grows with α.
                    assert!(t.y[i] > p[i]);
                }
            }
        }
        prev = Some(t.y);
    }
}

#[test]
fn q_loss_hand_values() {
    assert_eq!(half_mse(&[2.0], &[3.0]), 0.5);
    assert_eq!(half_mse(&[1.0, -2.0], &[1.0, -2.0]), 0.0);
    let base = half_mse(&[1.0, 2.0], &[0.5, 2.5]);
    assert!((half_mse(&[1.5, 1.5], &[0.5, 2.5]) - 4.0 * base).abs() < 1e-15);
}

#[test]
fn constant_critic_policy_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
    make_constant(&mut nets.q1, &[2.5]);
    make_constant(&mut nets.q2, &[2.5]);
    let obs: Vec<Observation> = (0..4).map(|_| random_obs(&mut rng)).collect();
    let refs: Vec<&Observation> = obs.iter().collect();
    let noise = draw_noise(4, &mut rng);
    let loss = policy_objective(&mut nets, &refs, &noise, 0.0, true).unwrap();
    assert_eq!(loss, -2.5);
    for s in nets.policy.stores() {
        for (_, p) in s.iter() {
            assert!(p.grad().iter().all(|g| *g == 0.0));
        }
    }
}

#[test]
fn policy_loss_with_alpha_hand_value() {
    // Single sample: choose the policy so that log π = −1 at the drawn action, min Q = 2, α = 0.5.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
    make_constant(&mut nets.q1, &[2.0]);
    make_constant(&mut nets.q2, &[3.0]);
    let obs = random_obs(&mut rng);
    let noise = [[0.0, 0.0]];
    // Zero means and noise: log π = ln 2 + 2·(−ls − ½ ln 2π); solve for ls.
    let ls = (2f64.ln() + 1.0 - (2.0 * std::f64::consts::PI).ln()) / 2.0;
    make_constant(&mut nets.policy, &[0.0, 0.0, ls, ls]);
    let lp = SquashedSample::new([0.0, 0.0], [ls, ls], [0.0, 0.0]).log_prob;
    assert!((lp + 1.0).abs() < 1e-12);
    let loss = policy_objective(&mut nets, &[&obs], &noise, 0.5, false).unwrap();
    assert!((loss + 2.5).abs() < 1e-12, "{loss}");
}

/// Every discrete choice the policy objective makes: relu signs in all
/// networks involved, log-std clamps, and which critic attains the minimum.
fn objective_regions(nets: &SacNets, obs: &[&Observation], noise: &[[f64; 2]]) -> Vec<bool> {
    let enc = nets.policy.encoder();
    let (features, mut pattern) = enc.net().infer_with_pattern(&enc.input(obs).unwrap()).unwrap();
    let (out, p) = nets.policy.head().infer_with_pattern(&features).unwrap();
    pattern.extend(p);
    let samples: Vec<SquashedSample> =
        out.rows().zip(noise).map(|(r, n)| SquashedSample::new([r[0], r[1]], [r[2], r[3]], *n)).collect();
    pattern.extend(samples.iter().flat_map(|s| s.clamped));
    let actions: Vec<[f64; 2]> = samples.iter().map(|s| s.action.to_array()).collect();
    let mut qs = Vec::new();
    for critic in [&nets.q1, &nets.q2] {
        let x = append_actions(&critic.encoder().infer(obs).unwrap(), &actions).unwrap();
        let (q, p) = critic.head().infer_with_pattern(&x).unwrap();
        pattern.extend(p);
        qs.push(q.into_data());
    }
    pattern.extend(qs[0].iter().zip(&qs[1]).map(|(a, b)| a <= b));
    pattern
}

#[test]
fn policy_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
    let obs: Vec<Observation> = (0..3).map(|_| random_obs(&mut rng)).collect();
    let refs: Vec<&Observation> = obs.iter().collect();
    let noise = draw_noise(3, &mut rng);
    let alpha = 0.2;
    let base = policy_objective(&mut nets, &refs, &noise, alpha, true).unwrap();
    let base_region = objective_regions(&nets, &refs, &noise);
    let eps = 1e-6;
    let (mut worst, mut checked, mut one_sided): (f64, usize, usize) = (0.0, 0, 0);
    for which in 0..2 {
        let count = nets.policy.stores()[which].len();
        for pi in 0..count {
            let len = nets.policy.stores()[which].by_index(pi).1.len();
            // Every head parameter, every 7th encoder parameter.
            let stride = if which == 0 { 7 } else { 1 };
            for j in (0..len).step_by(stride) {
                let analytic = policy_store(&mut nets, which).by_index(pi).1.grad()[j];
                let orig = policy_store(&mut nets, which).by_index(pi).1.value()[j];
                let mut probe = |v: f64| {
                    policy_store(&mut nets, which).by_index_mut(pi).value_mut()[j] = v;
                    let loss = policy_objective(&mut nets, &refs, &noise, alpha, false).unwrap();
                    (loss, objective_regions(&nets, &refs, &noise) == base_region)
                };
                let (up, up_same) = probe(orig + eps);
                let (down, down_same) = probe(orig - eps);
                policy_store(&mut nets, which).by_index_mut(pi).value_mut()[j] = orig;
                // A probe that changes a discrete choice does not estimate the local derivative.
                let numeric = match (up_same, down_same) {
                    (true, true) => (up - down) / (2.0 * eps),
                    (true, false) => (up - base) / eps,
                    (false, true) => (base - down) / eps,
                    (false, false) => continue,
                };
                if !(up_same && down_same) {
                    one_sided += 1;
                }
                checked += 1;
                // Gradients below the central-difference roundoff level (~1e-10 here) carry no signal.
                if (analytic - numeric).abs() > 1e-9 {
                    let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
                    worst = worst.max(err);
                }
            }
        }
    }
    assert!(checked > 200 && one_sided < checked / 10, "{checked} checked, {one_sided} one-sided");
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn soft_update_geometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cfg = tiny_net();
    let online = Approximator::critic("q1", &cfg, &mut rng).unwrap();
    let mut target = Approximator::critic("q1", &cfg, &mut rng).unwrap().renamed_copy("q1_target").unwrap();
    let d0 = target.distance(&online).unwrap();
    let rho: f64 = 0.95;
    for n in 1..=100 {
        soft_update(&mut target, &online, rho).unwrap();
        let d = target.distance(&online).unwrap();
        assert!((d - rho.powi(n) * d0).abs() < 1e-10, "n={n}: {d} vs {}", rho.powi(n) * d0);
    }
    soft_update(&mut target, &online, 0.0).unwrap();
    assert_eq!(target.distance(&online).unwrap(), 0.0);
}

#[test]
fn soft_update_scalar_example() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = tiny_net();
    let mut online = Approximator::critic("q1", &cfg, &mut rng).unwrap();
    let mut target = online.renamed_copy("q1_target").unwrap();
    let set = |a: &mut Approximator, v: f64| {
        let s = a.head_mut().params_mut();
        for i in 0..s.len() {
            s.by_index_mut(i).value_mut().iter_mut().for_each(|x| *x = v);
        }
    };
    set(&mut target, 1.0);
    set(&mut online, 0.0);
    soft_update(&mut target, &online, 0.995).unwrap();
    assert!(target.head().params().iter().all(|(_, p)| p.value().iter().all(|v| *v == 0.995)));
    let mismatched = Approximator::state_head("p", &cfg, 4, &mut rng).unwrap();
    assert!(soft_update(&mut target, &mismatched, 0.5).is_err());
}

#[test]
fn targets_start_as_exact_copies() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
    assert_eq!(snapshot(&nets.q1), snapshot(&nets.q1_target));
    assert_eq!(snapshot(&nets.q2), snapshot(&nets.q2_target));
    assert_ne!(snapshot(&nets.q1), snapshot(&nets.q2));
    assert!(nets.q1_target.param_shapes().iter().all(|(n, _)| n.starts_with("q1_target/")));
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = SacConfig { lr: 0.0, batch_size: 8, rho: 1.0, ..SacConfig::default() };
    let mut nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
    let mut opt = SacOptimizers::new(&nets, cfg.lr);
    let buf = random_buffer(&mut rng, 20, 4);
    let before: Vec<Vec<u64>> = nets.all().iter().map(|a| snapshot(a)).collect();
    let d = sac_train_step(&mut nets, &buf, &cfg, &mut opt, &mut rng).unwrap();
    assert!(d.q1_loss.is_finite() && d.q2_loss.unwrap().is_finite() && d.policy_loss.is_finite());
    let after: Vec<Vec<u64>> = nets.all().iter().map(|a| snapshot(a)).collect();
    assert_eq!(before, after);
}

#[test]
fn frozen_targets_with_rho_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = SacConfig { lr: 1e-3, batch_size: 8, rho: 1.0, ..SacConfig::default() };
    let mut nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
    let mut opt = SacOptimizers::new(&nets, cfg.lr);
    let buf = random_buffer(&mut rng, 20, 4);
    let (t1, t2) = (snapshot(&nets.q1_target), snapshot(&nets.q2_target));
    let q1 = snapshot(&nets.q1);
    for _ in 0..3 {
        sac_train_step(&mut nets, &buf, &cfg, &mut opt, &mut rng).unwrap();
    }
    assert_eq!(snapshot(&nets.q1_target), t1);
    assert_eq!(snapshot(&nets.q2_target), t2);
    assert_ne!(snapshot(&nets.q1), q1);
}

#[test]
fn train_step_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let cfg = SacConfig { lr: 1e-3, batch_size: 8, ..SacConfig::default() };
        let mut nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
        let mut opt = SacOptimizers::new(&nets, cfg.lr);
        let buf = random_buffer(&mut rng, 20, 4);
        let d: Vec<_> = (0..3).map(|_| sac_train_step(&mut nets, &buf, &cfg, &mut opt, &mut rng).unwrap()).collect();
        (format!("{d:?}"), snapshot(&nets.policy))
    };
    assert_eq!(run(), run());
}

#[test]
fn insufficient_buffer_is_a_state_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let cfg = SacConfig { batch_size: 64, ..SacConfig::default() };
    let mut nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
    let mut opt = SacOptimizers::new(&nets, cfg.lr);
    let buf = random_buffer(&mut rng, 10, 0);
    assert!(matches!(
        sac_train_step(&mut nets, &buf, &cfg, &mut opt, &mut rng),
        Err(fusion_drive::CoreError::State(_))
    ));
}

#[test]
fn updates_touch_only_their_own_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
    let mut opt = SacOptimizers::new(&nets, 1e-2);
    let buf = random_buffer(&mut rng, 16, 0);
    let ts: Vec<&Transition> = buf.iter().collect();
    let batch = Batch::from_transitions(&ts);
    let cfg = SacConfig::default();
    let before: Vec<Vec<u64>> = nets.all().iter().map(|a| snapshot(a)).collect();

    // Critic step: only q1 moves.
    let y = compute_q_target(&batch, &nets, &cfg, &mut rng).unwrap().y;
    q_descent(&batch, &mut nets.q1, &mut opt.q1, &y).unwrap();
    let mid: Vec<Vec<u64>> = nets.all().iter().map(|a| snapshot(a)).collect();
    for (i, (a, b)) in before.iter().zip(&mid).enumerate() {
        assert_eq!(a == b, i != 1, "approximator {i}");
    }

    // Policy step: only the policy moves.
    let noise = draw_noise(batch.len(), &mut rng);
    policy_objective(&mut nets, &batch.obs, &noise, cfg.alpha, true).unwrap();
    opt.policy.step(&mut nets.policy).unwrap();
    let after: Vec<Vec<u64>> = nets.all().iter().map(|a| snapshot(a)).collect();
    for (i, (a, b)) in mid.iter().zip(&after).enumerate() {
        assert_eq!(a == b, i != 0, "approximator {i}");
    }
}

#[test]
fn degenerate_mdp_critics_converge_to_geometric_sum() {
    // One state, reward 1, never terminal: Q = 1/(1 − γ) = 10 for every action.
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let obs = Arc::new(random_obs(&mut rng));
    let mut buf = ReplayBuffer::new(100).unwrap();
    for _ in 0..100 {
        let action = Action::new(rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0)).unwrap();
        buf.push(Transition { obs: obs.clone(), action, reward: 1.0, next_obs: obs.clone(), done: false }).unwrap();
    }
    let cfg = SacConfig { gamma: 0.9, alpha: 0.0, rho: 0.95, batch_size: 16, lr: 3e-3, ..SacConfig::default() };
    let mut nets = SacNets::new(&tiny_net(), &mut rng).unwrap();
    let mut opt = SacOptimizers::new(&nets, cfg.lr);
    for _ in 0..5000 {
        sac_train_step(&mut nets, &buf, &cfg, &mut opt, &mut rng).unwrap();
    }
    let probe: Vec<[f64; 2]> = (0..20).map(|i| [i as f64 / 19.0, 1.0 - 2.0 * i as f64 / 19.0]).collect();
    let obs_refs = vec![obs.as_ref(); probe.len()];
    for critic in [&nets.q1, &nets.q2] {
        for q in critic.infer_q(&obs_refs, &probe).unwrap() {
            assert!((q - 10.0).abs() < 0.5, "{q}");
        }
    }
}

#[test]
fn ddpg_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let cfg = SacConfig { lr: 0.0, batch_size: 8, exploration_noise: 0.0, ..SacConfig::default() };
    let mut agent = DdpgAgent::new(cfg, &tiny_net(), &mut rng).unwrap();
    let buf = random_buffer(&mut rng, 20, 2);
    let before = (snapshot(&agent.nets.policy), snapshot(&agent.nets.q1));
    agent.train_step(&buf, &mut rng).unwrap();
    assert_eq!(before, (snapshot(&agent.nets.policy), snapshot(&agent.nets.q1)));

    let ts: Vec<&Transition> = buf.iter().collect();
    let batch = Batch::from_transitions(&ts);
    let y = ddpg_targets(&batch, &agent.nets, 0.99).unwrap();
    for i in 0..batch.len() {
        if batch.dones[i] {
            assert_eq!(y[i], batch.rewards[i]);
        }
    }

    let obs = random_obs(&mut rng);
    let raw = agent.nets.policy.infer_state(&[&obs]).unwrap();
    let mean = fusion_drive::agents::squash([raw.data()[0], raw.data()[1]]);
    let a = ddpg_action(&agent.nets.policy, &obs, ActionMode::Stochastic, 0.0, &mut rng).unwrap();
    assert_eq!(a, mean);
    assert_eq!(agent.act(&obs, ActionMode::Deterministic, &mut rng).unwrap(), mean);
}

#[test]
fn ddpg_learns_with_positive_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let cfg = SacConfig { lr: 1e-3, batch_size: 8, ..SacConfig::default() };
    let mut agent = DdpgAgent::new(cfg, &tiny_net(), &mut rng).unwrap();
    let buf = random_buffer(&mut rng, 20, 2);
    let p0 = snapshot(&agent.nets.policy);
    let d = agent.train_step(&buf, &mut rng).unwrap();
    assert!(d.q2_loss.is_none());
    assert_ne!(snapshot(&agent.nets.policy), p0);
    let mut noisy = Vec::new();
    let obs = random_obs(&mut rng);
    for _ in 0..1000 {
        noisy.push(ddpg_action(&agent.nets.policy, &obs, ActionMode::Stochastic, 0.5, &mut rng).unwrap());
    }
    assert!(noisy.iter().all(|a| (0.0..=1.0).contains(&a.throttle()) && (-1.0..=1.0).contains(&a.steer())));
}
