//! Clipped-surrogate policy optimization with generalized advantage estimation.
//!
//! Actor and critic are separate tanh networks; exploration noise is a
//! state-independent diagonal Gaussian. All parameters are kept on the f32
//! grid after every optimizer step so that a saved checkpoint reloads to the
//! exact policy that produced the training log.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_value, Entry, RunConfig};
use crate::env::{VecEnv, ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::numerics::{clip_global_norm, Adam, GaussianHead, Mlp};
use crate::rng::{derive_seed, stream_rng};
use crate::terrain::{CurriculumGrid, TerrainFamily};

pub const EXPERT_HIDDEN: usize = 128;
pub const GATE_HIDDEN: usize = 64;
/// Final actor layer scale, so that initial actions sit near zero.
pub const ACTOR_OUTPUT_SCALE: f64 = 0.01;
pub const METRICS_HEADER: &str =
    "iter,mean_reward,vel_err,mean_row,policy_loss,value_loss,entropy,clip_frac,kl";

#[derive(Debug, Clone, PartialEq)]
pub struct PpoHyper {
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub horizon: usize,
    pub max_grad_norm: f64,
    pub init_log_std: f64,
    pub checkpoint_every: usize,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            entropy_coeff: 0.005,
            value_coeff: 0.5,
            learning_rate: 3e-4,
            epochs: 4,
            minibatches: 4,
            horizon: 25,
            max_grad_norm: 1.0,
            init_log_std: -1.0,
            checkpoint_every: 100,
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("ppo: {what}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad("gae_lambda must lie in (0, 1]");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("learning_rate and max_grad_norm must be positive");
        }
        if self.epochs == 0 || self.minibatches == 0 || self.horizon == 0 {
            return bad("epochs, minibatches and horizon must be positive");
        }
        if !self.entropy_coeff.is_finite() || !self.value_coeff.is_finite() || !self.init_log_std.is_finite() {
            return bad("coefficients must be finite");
        }
        Ok(())
    }

    pub fn apply(&mut self, entry: &Entry) -> Result<bool> {
        let target: &mut f64 = match entry.key.as_str() {
            "epochs" => {
                self.epochs = parse_value(entry)?;
                return Ok(true);
            }
            "minibatches" => {
                self.minibatches = parse_value(entry)?;
                return Ok(true);
            }
            "horizon" => {
                self.horizon = parse_value(entry)?;
                return Ok(true);
            }
            "checkpoint_every" => {
                self.checkpoint_every = parse_value(entry)?;
                return Ok(true);
            }
            "clip_epsilon" => &mut self.clip_epsilon,
            "gamma" => &mut self.gamma,
            "gae_lambda" => &mut self.gae_lambda,
            "entropy_coeff" => &mut self.entropy_coeff,
            "value_coeff" => &mut self.value_coeff,
            "learning_rate" => &mut self.learning_rate,
            "max_grad_norm" => &mut self.max_grad_norm,
            "init_log_std" => &mut self.init_log_std,
            _ => return Ok(false),
        };
        *target = parse_value(entry)?;
        Ok(true)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "epochs = {}\nminibatches = {}\nhorizon = {}\ncheckpoint_every = {}\n",
            self.epochs, self.minibatches, self.horizon, self.checkpoint_every
        );
        for (k, v) in [
            ("clip_epsilon", self.clip_epsilon),
            ("gamma", self.gamma),
            ("gae_lambda", self.gae_lambda),
            ("entropy_coeff", self.entropy_coeff),
            ("value_coeff", self.value_coeff),
            ("learning_rate", self.learning_rate),
            ("max_grad_norm", self.max_grad_norm),
            ("init_log_std", self.init_log_std),
        ] {
            out.push_str(&format!("{k} = {v:?}\n"));
        }
        out
    }
}

/// Actor, critic and exploration noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub actor: Mlp,
    pub critic: Mlp,
    pub head: GaussianHead,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: usize, act_dim: usize, init_log_std: f64, rng: &mut R) -> Result<Self> {
        let actor = Mlp::new(&[obs_dim, hidden, hidden, act_dim], ACTOR_OUTPUT_SCALE, rng)?;
        let critic = Mlp::new(&[obs_dim, hidden, hidden, 1], 1.0, rng)?;
        let mut head = GaussianHead::new(act_dim, init_log_std);
        snap(head.log_std_mut());
        Ok(Self { actor, critic, head })
    }

    /// 21-128-128-8 actor and 21-128-128-1 critic.
    pub fn expert<R: Rng + ?Sized>(init_log_std: f64, rng: &mut R) -> Result<Self> {
        Self::new(OBS_DIM, EXPERT_HIDDEN, ACT_DIM, init_log_std, rng)
    }

    /// 21-64-64-4 actor (three confidences and a duration) and 21-64-64-1 critic.
    pub fn gate<R: Rng + ?Sized>(init_log_std: f64, rng: &mut R) -> Result<Self> {
        Self::new(OBS_DIM, GATE_HIDDEN, 4, init_log_std, rng)
    }

    pub fn act_dim(&self) -> usize {
        self.head.dim()
    }

    pub fn param_count(&self) -> usize {
        self.actor.params().len() + self.head.dim() + self.critic.params().len()
    }

    /// Actor parameters, then log-stds, then critic parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(self.actor.params());
        v.extend_from_slice(self.head.log_std());
        v.extend_from_slice(self.critic.params());
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension { context: "policy parameters", expected: self.param_count(), got: flat.len() });
        }
        let (a, rest) = flat.split_at(self.actor.params().len());
        let (s, c) = rest.split_at(self.head.dim());
        self.actor.params_mut().copy_from_slice(a);
        self.head.log_std_mut().copy_from_slice(s);
        self.critic.params_mut().copy_from_slice(c);
        Ok(())
    }

    /// Deterministic action for one observation.
    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward(obs)
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(obs)?[0])
    }

    /// Action means and values for a batch of observations.
    pub fn evaluate(&self, obs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        let means = self.actor.forward_batch(obs)?;
        let values = self.critic.forward_batch(obs)?.column(0).to_owned();
        Ok((means, values))
    }
}

fn snap(v: &mut [f64]) {
    for x in v {
        *x = *x as f32 as f64;
    }
}

/// Transitions laid out time-major: index `t * num_envs + e`.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub horizon: usize,
    pub num_envs: usize,
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Values of the observations following the last stored step.
    pub last_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// One stored step of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<'a> {
    pub observation: &'a [f64],
    pub action: &'a [f64],
    pub log_prob: f64,
    pub value_estimate: f64,
    pub reward: f64,
    pub done: bool,
    pub time_index: usize,
}

impl RolloutBuffer {
    pub fn new(horizon: usize, num_envs: usize, obs_dim: usize, act_dim: usize) -> Self {
        let n = horizon * num_envs;
        Self {
            horizon,
            num_envs,
            obs: Array2::zeros((n, obs_dim)),
            actions: Array2::zeros((n, act_dim)),
            log_probs: vec![0.0; n],
            values: vec![0.0; n],
            rewards: vec![0.0; n],
            dones: vec![false; n],
            last_values: vec![0.0; num_envs],
            advantages: vec![0.0; n],
            returns: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn transition(&self, t: usize, env: usize) -> Transition<'_> {
        let i = t * self.num_envs + env;
        Transition {
            observation: self.obs.row(i).to_slice().expect("standard layout"),
            action: self.actions.row(i).to_slice().expect("standard layout"),
            log_prob: self.log_probs[i],
            value_estimate: self.values[i],
            reward: self.rewards[i],
            done: self.dones[i],
            time_index: t,
        }
    }

    /// Fill `advantages` and `returns`.
    pub fn compute_gae(&mut self, gamma: f64, lambda: f64) {
        let (h, n) = (self.horizon, self.num_envs);
        let column = |e: usize| -> (Vec<f64>, Vec<f64>, Vec<bool>) {
            let idx = (0..h).map(|t| t * n + e);
            (
                idx.clone().map(|i| self.rewards[i]).collect(),
                idx.clone().map(|i| self.values[i]).collect(),
                idx.map(|i| self.dones[i]).collect(),
            )
        };
        let mut adv = vec![0.0; h * n];
        for e in 0..n {
            let (r, v, d) = column(e);
            let a = compute_gae(&r, &v, &d, self.last_values[e], gamma, lambda);
            for t in 0..h {
                adv[t * n + e] = a[t];
            }
        }
        self.returns = adv.iter().zip(&self.values).map(|(a, v)| a + v).collect();
        self.advantages = adv;
    }
}

/// Advantages of one slot's trajectory. `bootstrap` is the value of the
/// state after the last step; a `done` step does not look past itself.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let keep = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * keep - values[t];
        next_adv = delta + gamma * lambda * keep * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    adv
}

/// Shift and scale to zero mean and unit standard deviation (population).
pub fn normalize(values: &mut [f64]) {
    let n = values.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v = if std > 1e-12 { (*v - mean) / std } else { *v - mean };
    }
}

/// Sample an action per row; returns actions and their log-probabilities.
pub fn sample_actions<R: Rng + ?Sized>(head: &GaussianHead, means: &Array2<f64>, rng: &mut R) -> (Array2<f64>, Vec<f64>) {
    let mut actions = Array2::zeros(means.raw_dim());
    let mut log_probs = Vec::with_capacity(means.nrows());
    for (mean, mut out) in means.outer_iter().zip(actions.outer_iter_mut()) {
        let (a, lp) = head.sample(mean.as_slice().expect("standard layout"), rng);
        out.assign(&Array1::from(a));
        log_probs.push(lp);
    }
    (actions, log_probs)
}

/// Per-iteration rollout statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RolloutStats {
    pub mean_reward: f64,
    pub vel_err: f64,
    pub mean_row: f64,
}

/// Step every slot `horizon` times with the current policy. Finished slots
/// are reset inside the env (with their curriculum move) and keep going.
/// With `deterministic`, the mean action is taken instead of a sample.
pub fn collect_rollout<R: Rng + ?Sized>(
    policy: &PolicyNet,
    envs: &mut VecEnv,
    horizon: usize,
    gamma: f64,
    deterministic: bool,
    rng: &mut R,
) -> Result<(RolloutBuffer, RolloutStats)> {
    let n = envs.len();
    let mut buf = RolloutBuffer::new(horizon, n, OBS_DIM, policy.act_dim());
    let mut obs = envs.observations();
    let mut err_sum = 0.0;
    for t in 0..horizon {
        let (means, values) = policy.evaluate(obs.view())?;
        let (actions, log_probs) = if deterministic {
            let lp = means.outer_iter().map(|m| {
                let m = m.as_slice().expect("standard layout");
                policy.head.log_prob(m, m)
            });
            (means.clone(), lp.collect())
        } else {
            sample_actions(&policy.head, &means, rng)
        };
        let step = envs.batch_step(actions.view())?;
        let base = t * n;
        buf.obs.slice_mut(ndarray::s![base..base + n, ..]).assign(&obs);
        buf.actions.slice_mut(ndarray::s![base..base + n, ..]).assign(&actions);
        for e in 0..n {
            let mut reward = step.rewards[e];
            // a timeout is not a failure: fold the value of the cut-off state back in
            if let (Some(outcome), Some(last)) = (&step.outcomes[e], &step.terminal_obs[e]) {
                if !outcome.fell {
                    reward += gamma * policy.value(last)?;
                }
            }
            buf.log_probs[base + e] = log_probs[e];
            buf.values[base + e] = values[e];
            buf.rewards[base + e] = reward;
            buf.dones[base + e] = step.dones[e];
            err_sum += (step.velocities[e] - step.commands[e]).abs();
        }
        obs = step.obs;
    }
    let (_, last) = policy.evaluate(obs.view())?;
    buf.last_values = last.to_vec();
    let total = (horizon * n) as f64;
    let stats = RolloutStats {
        mean_reward: buf.rewards.iter().sum::<f64>() / total,
        vel_err: err_sum / total,
        mean_row: envs.mean_row(),
    };
    Ok((buf, stats))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
}

/// Losses and gradient of one minibatch. Gradients use the flat layout of
/// [`PolicyNet::flat_params`].
#[derive(Debug, Clone)]
pub struct MinibatchEval {
    pub stats: UpdateStats,
    pub ratios: Vec<f64>,
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Evaluate the clipped objective on the rows `idx` of `buf`. Advantages are
/// normalized within the minibatch.
pub fn minibatch_loss(policy: &PolicyNet, buf: &RolloutBuffer, idx: &[usize], hyper: &PpoHyper) -> Result<MinibatchEval> {
    let b = idx.len();
    let bf = b as f64;
    let obs = buf.obs.select(Axis(0), idx);
    let actions = buf.actions.select(Axis(0), idx);
    let mut adv: Vec<f64> = idx.iter().map(|&i| buf.advantages[i]).collect();
    normalize(&mut adv);

    let actor_trace = policy.actor.trace_batch(obs.view())?;
    let critic_trace = policy.critic.trace_batch(obs.view())?;
    let means = actor_trace.output();
    let values = critic_trace.output();
    let d = policy.act_dim();
    let log_std = policy.head.log_std();
    let inv_var: Vec<f64> = log_std.iter().map(|s| (-2.0 * s).exp()).collect();

    let mut d_mean = Array2::<f64>::zeros((b, d));
    let mut d_log_std = vec![0.0; d];
    let mut d_value = Array2::<f64>::zeros((b, 1));
    let mut ratios = Vec::with_capacity(b);
    let (mut surrogate, mut value_loss, mut clipped, mut kl) = (0.0, 0.0, 0.0, 0.0);
    let eps = hyper.clip_epsilon;
    for k in 0..b {
        let mean = means.row(k);
        let action = actions.row(k);
        let log_prob = policy.head.log_prob(mean.as_slice().expect("layout"), action.as_slice().expect("layout"));
        let ratio = (log_prob - buf.log_probs[idx[k]]).exp();
        ratios.push(ratio);
        let a = adv[k];
        let unclipped = ratio * a;
        let clipped_term = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
        surrogate += unclipped.min(clipped_term);
        if (ratio - 1.0).abs() > eps {
            clipped += 1.0;
        }
        kl += (ratio - 1.0) - ratio.ln();
        // d(-min(...))/d log_prob; zero where the clipped branch binds
        let active = !((a >= 0.0 && ratio > 1.0 + eps) || (a < 0.0 && ratio < 1.0 - eps));
        if active {
            let g = -a * ratio / bf;
            for j in 0..d {
                let diff = action[j] - mean[j];
                d_mean[[k, j]] = g * diff * inv_var[j];
                d_log_std[j] += g * (diff * diff * inv_var[j] - 1.0);
            }
        }
        let v_err = values[[k, 0]] - buf.returns[idx[k]];
        value_loss += v_err * v_err;
        d_value[[k, 0]] = 2.0 * hyper.value_coeff * v_err / bf;
    }
    let entropy = policy.head.entropy();
    for g in &mut d_log_std {
        *g -= hyper.entropy_coeff;
    }
    let policy_loss = -surrogate / bf;
    let value_loss = value_loss / bf;
    let loss = policy_loss + hyper.value_coeff * value_loss - hyper.entropy_coeff * entropy;

    let n_actor = policy.actor.params().len();
    let mut grad = vec![0.0; policy.param_count()];
    policy.actor.backward_batch(&actor_trace, d_mean.view(), &mut grad[..n_actor])?;
    grad[n_actor..n_actor + d].copy_from_slice(&d_log_std);
    policy.critic.backward_batch(&critic_trace, d_value.view(), &mut grad[n_actor + d..])?;

    Ok(MinibatchEval {
        stats: UpdateStats { policy_loss, value_loss, entropy, clip_frac: clipped / bf, approx_kl: kl / bf },
        ratios,
        loss,
        grad,
    })
}

/// Several epochs of minibatch steps over `buf`. A non-finite loss or
/// gradient aborts before the parameters are touched.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PolicyNet,
    adam: &mut Adam,
    buf: &RolloutBuffer,
    hyper: &PpoHyper,
    rng: &mut R,
) -> Result<UpdateStats> {
    let n = buf.len();
    let size = n / hyper.minibatches;
    if size == 0 {
        return Err(Error::Config(format!("{} transitions cannot fill {} minibatches", n, hyper.minibatches)));
    }
    adam.lr = hyper.learning_rate;
    let mut order: Vec<usize> = (0..n).collect();
    let mut total = UpdateStats::default();
    let mut count = 0.0;
    for epoch in 0..hyper.epochs {
        order.shuffle(rng);
        for (m, idx) in order.chunks_exact(size).enumerate() {
            let mut eval = minibatch_loss(policy, buf, idx, hyper)?;
            if !eval.loss.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
                let s = eval.stats;
                return Err(Error::Numerical(format!(
                    "non-finite loss {} at epoch {epoch} minibatch {m} (policy {}, value {}, entropy {}, kl {})",
                    eval.loss, s.policy_loss, s.value_loss, s.entropy, s.approx_kl
                )));
            }
            clip_global_norm(&mut [&mut eval.grad], hyper.max_grad_norm);
            let mut params = policy.flat_params();
            adam.step(&mut params, &eval.grad)?;
            snap(&mut params);
            policy.set_flat_params(&params)?;
            policy.head.clamp();
            let s = eval.stats;
            total.policy_loss += s.policy_loss;
            total.value_loss += s.value_loss;
            total.entropy += s.entropy;
            total.clip_frac += s.clip_frac;
            total.approx_kl += s.approx_kl;
            count += 1.0;
        }
    }
    Ok(UpdateStats {
        policy_loss: total.policy_loss / count,
        value_loss: total.value_loss / count,
        entropy: total.entropy / count,
        clip_frac: total.clip_frac / count,
        approx_kl: total.approx_kl / count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iter: usize,
    pub rollout: RolloutStats,
    pub update: UpdateStats,
}

impl IterationLog {
    pub fn csv_row(&self) -> String {
        let (r, u) = (&self.rollout, &self.update);
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.iter, r.mean_reward, r.vel_err, r.mean_row, u.policy_loss, u.value_loss, u.entropy, u.clip_frac, u.approx_kl
        )
    }
}

pub fn metrics_csv(logs: &[IterationLog]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for l in logs {
        out.push_str(&l.csv_row());
        out.push('\n');
    }
    out
}

/// Policy, optimizer and envs of one training run.
pub struct Trainer {
    pub policy: PolicyNet,
    pub adam: Adam,
    pub envs: VecEnv,
    pub hyper: PpoHyper,
    rng: ChaCha8Rng,
}

impl Trainer {
    /// Fresh expert-sized policy on `grid`. Network initialization, env slots
    /// and action sampling draw from separate seeds derived from `seed`.
    pub fn new(grid: CurriculumGrid, config: &RunConfig, seed: u64) -> Result<Self> {
        config.env.validate()?;
        config.ppo.validate()?;
        let mut init = stream_rng(derive_seed(seed, 0), 0);
        let policy = PolicyNet::expert(config.ppo.init_log_std, &mut init)?;
        let envs = VecEnv::new(&config.env, std::sync::Arc::new(grid), derive_seed(seed, 1))?;
        Ok(Self {
            adam: Adam::new(policy.param_count(), config.ppo.learning_rate),
            policy,
            envs,
            hyper: config.ppo.clone(),
            rng: stream_rng(derive_seed(seed, 2), 0),
        })
    }

    /// Env steps consumed per iteration.
    pub fn steps_per_iteration(&self) -> usize {
        self.hyper.horizon * self.envs.len()
    }

    pub fn iterate(&mut self, iter: usize) -> Result<IterationLog> {
        let (mut buf, rollout) =
            collect_rollout(&self.policy, &mut self.envs, self.hyper.horizon, self.hyper.gamma, false, &mut self.rng)?;
        buf.compute_gae(self.hyper.gamma, self.hyper.gae_lambda);
        let update = ppo_update(&mut self.policy, &mut self.adam, &buf, &self.hyper, &mut self.rng)?;
        Ok(IterationLog { iter, rollout, update })
    }

    /// Run `iterations` iterations. `on_iteration` sees every log row and the
    /// current policy, e.g. to write checkpoints.
    pub fn run(
        &mut self,
        iterations: usize,
        mut on_iteration: impl FnMut(&IterationLog, &PolicyNet) -> Result<()>,
    ) -> Result<Vec<IterationLog>> {
        let mut logs = Vec::with_capacity(iterations);
        for i in 1..=iterations {
            let log = self.iterate(i)?;
            on_iteration(&log, &self.policy)?;
            logs.push(log);
        }
        Ok(logs)
    }
}

/// Train one expert on the curriculum grid of `family`.
pub fn train_expert(
    family: TerrainFamily,
    iterations: usize,
    config: &RunConfig,
    seed: u64,
    on_iteration: impl FnMut(&IterationLog, &PolicyNet) -> Result<()>,
) -> Result<(PolicyNet, Vec<IterationLog>)> {
    let grid = CurriculumGrid::new(family, derive_seed(seed, 3))?;
    let mut trainer = Trainer::new(grid, config, seed)?;
    let logs = trainer.run(iterations, on_iteration)?;
    Ok((trainer.policy, logs))
}
