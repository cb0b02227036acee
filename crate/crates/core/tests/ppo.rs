use std::sync::Arc;

use mtac::config::RunConfig;
use mtac::env::{EnvConfig, VecEnv};
use mtac::numerics::{global_norm, Adam, GaussianHead, Mlp};
use mtac::ppo::{collect_rollout, compute_gae, minibatch_loss, ppo_update, PolicyNet, PpoHyper, RolloutBuffer};
use mtac::rng::stream_rng;
use mtac::terrain::{CurriculumGrid, TerrainFamily};
use rand::Rng;

fn bandit_policy() -> PolicyNet {
    PolicyNet {
        actor: Mlp::zeros(&[1, 1]).unwrap(),
        critic: Mlp::zeros(&[1, 1]).unwrap(),
        head: GaussianHead::new(1, 0.0),
    }
}

/// P(a > 0) for the bandit policy: the input is always zero, so the actor
/// bias is the mean.
fn better_arm_probability(policy: &PolicyNet) -> f64 {
    let mean = policy.actor.params()[1];
    let std = policy.head.log_std()[0].exp();
    let z = mean / std;
    // Abramowitz-Stegun 7.1.26 for erf
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.327_591_1 * x.abs());
    let poly = t * (0.254_829_592 + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    let erf = (1.0 - poly * (-x * x).exp()).copysign(x);
    0.5 * (1.0 + erf)
}

#[test]
fn two_armed_bandit_converges_to_the_better_arm() {
    let mut policy = bandit_policy();
    let hyper = PpoHyper { learning_rate: 0.01, horizon: 1, ..Default::default() };
    let mut adam = Adam::new(policy.param_count(), hyper.learning_rate);
    let mut rng = stream_rng(21, 0);
    assert!((better_arm_probability(&policy) - 0.5).abs() < 1e-9);
    for _ in 0..200 {
        let n = 64;
        let mut buf = RolloutBuffer::new(1, n, 1, 1);
        for e in 0..n {
            let mean = policy.mean_action(&[0.0]).unwrap();
            let (a, lp) = policy.head.sample(&mean, &mut rng);
            buf.actions[[e, 0]] = a[0];
            buf.log_probs[e] = lp;
            buf.values[e] = policy.value(&[0.0]).unwrap();
            buf.rewards[e] = if a[0] > 0.0 { 1.0 } else { 0.0 };
            buf.dones[e] = true;
        }
        buf.compute_gae(hyper.gamma, hyper.gae_lambda);
        ppo_update(&mut policy, &mut adam, &buf, &hyper, &mut rng).unwrap();
    }
    let p = better_arm_probability(&policy);
    assert!(p > 0.95, "better arm probability {p}");
}

fn random_buffer(policy: &PolicyNet, seed: u64) -> RolloutBuffer {
    let mut rng = stream_rng(seed, 0);
    let (h, n, obs_dim) = (5, 8, policy.actor.input_dim());
    let mut buf = RolloutBuffer::new(h, n, obs_dim, policy.act_dim());
    for i in 0..buf.len() {
        let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = policy.mean_action(&obs).unwrap();
        let (a, lp) = policy.head.sample(&mean, &mut rng);
        for (j, v) in obs.iter().enumerate() {
            buf.obs[[i, j]] = *v;
        }
        for (j, v) in a.iter().enumerate() {
            buf.actions[[i, j]] = *v;
        }
        buf.log_probs[i] = lp;
        buf.values[i] = policy.value(&obs).unwrap();
        buf.rewards[i] = rng.random_range(-1.0..1.0);
        buf.dones[i] = rng.random_bool(0.15);
    }
    buf.compute_gae(0.99, 0.95);
    buf
}

#[test]
fn first_minibatch_surrogate_is_minus_mean_advantage() {
    let policy = PolicyNet::new(5, 16, 3, -0.7, &mut stream_rng(3, 1)).unwrap();
    let buf = random_buffer(&policy, 3);
    let idx: Vec<usize> = (0..10).collect();
    let eval = minibatch_loss(&policy, &buf, &idx, &PpoHyper::default()).unwrap();
    // advantages are normalized inside the minibatch, so -mean(A) is 0
    assert!(eval.stats.policy_loss.abs() < 1e-12, "{}", eval.stats.policy_loss);
    assert_eq!(eval.stats.clip_frac, 0.0);
}

#[test]
fn clipped_samples_contribute_no_policy_gradient() {
    let policy = PolicyNet::new(4, 8, 2, -0.5, &mut stream_rng(4, 1)).unwrap();
    let mut buf = random_buffer(&policy, 4);
    // one sample, positive advantage, ratio pushed to 1 + 2 eps
    buf.advantages[0] = 1.0;
    let idx = [0usize];
    let eps: f64 = 0.2;
    let fresh = minibatch_loss(&policy, &buf, &idx, &PpoHyper::default()).unwrap();
    let current = buf.log_probs[0];
    buf.log_probs[0] = current - (1.0 + 2.0 * eps).ln();
    let clipped = minibatch_loss(&policy, &buf, &idx, &PpoHyper { entropy_coeff: 0.0, ..Default::default() }).unwrap();
    assert!((clipped.ratios[0] - (1.0 + 2.0 * eps)).abs() < 1e-9);
    assert_eq!(clipped.stats.clip_frac, 1.0);
    let actor_len = policy.actor.params().len() + policy.act_dim();
    assert!(clipped.grad[..actor_len].iter().all(|&g| g == 0.0));
    assert!(fresh.grad[..actor_len].iter().any(|&g| g != 0.0));
}

#[test]
fn gradient_clip_contract() {
    let policy = PolicyNet::new(4, 8, 2, -0.5, &mut stream_rng(5, 1)).unwrap();
    let mut buf = random_buffer(&policy, 5);
    for r in &mut buf.rewards {
        *r *= 1e4;
    }
    buf.compute_gae(0.99, 0.95);
    let idx: Vec<usize> = (0..buf.len()).collect();
    let mut g = minibatch_loss(&policy, &buf, &idx, &PpoHyper::default()).unwrap().grad;
    assert!(global_norm([g.as_slice()]) > 1.0);
    mtac::numerics::clip_global_norm(&mut [&mut g], 1.0);
    assert!(global_norm([g.as_slice()]) <= 1.0 + 1e-9);
}

#[test]
fn normalized_minibatch_advantages() {
    let mut rng = stream_rng(6, 0);
    for _ in 0..20 {
        let n = rng.random_range(2..200);
        let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..80.0)).collect();
        mtac::ppo::normalize(&mut a);
        let mean = a.iter().sum::<f64>() / n as f64;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(mean.abs() < 1e-9 && (std - 1.0).abs() < 1e-6);
    }
}

#[test]
fn length_ten_gae_against_double_sum() {
    let mut rng = stream_rng(7, 0);
    let r: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (g, l, boot) = (0.97, 0.9, 0.3);
    let a = compute_gae(&r, &v, &[false; 10], boot, g, l);
    for t in 0..10 {
        let mut sum = 0.0;
        for k in t..10 {
            let next = if k + 1 < 10 { v[k + 1] } else { boot };
            sum += (g * l).powi((k - t) as i32) * (r[k] + g * next - v[k]);
        }
        assert!((a[t] - sum).abs() < 1e-10);
    }
}

#[test]
fn rollout_shape_and_replay() {
    let config = EnvConfig { num_envs: 256, ..Default::default() };
    let grid = Arc::new(CurriculumGrid::new(TerrainFamily::Flat, 1).unwrap());
    let mut policy = PolicyNet::expert(-1.0, &mut stream_rng(8, 0)).unwrap();
    policy.head.log_std_mut().fill(-4.0);
    let run = || {
        let mut envs = VecEnv::new(&config, grid.clone(), 9).unwrap();
        collect_rollout(&policy, &mut envs, 25, 0.99, true, &mut stream_rng(10, 0)).unwrap().0
    };
    let (a, b) = (run(), run());
    assert_eq!(a.len(), 6400);
    assert_eq!(a.obs, b.obs);
    assert_eq!(a.actions, b.actions);
    assert_eq!(a.rewards, b.rewards);
    assert_eq!(a.dones, b.dones);
    assert!(a.rewards.iter().all(|&r| r >= 0.0));
}

#[test]
fn short_training_run_logs_every_iteration() {
    let mut config = RunConfig::default();
    config.env.num_envs = 8;
    config.ppo.horizon = 8;
    let mut seen = Vec::new();
    let (_, logs) = mtac::ppo::train_expert(TerrainFamily::Bumpy, 3, &config, 1, |log, _| {
        seen.push(log.iter);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![1, 2, 3]);
    assert_eq!(logs.last().unwrap().iter, 3);
}
