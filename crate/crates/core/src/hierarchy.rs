//! Policy over policies.
//!
//! A gate network looks at the shared 21-dim observation and emits four
//! numbers: one confidence per expert and a raw duration. The most confident
//! expert then drives the robot for `0.2 + 1.8 sigmoid(raw)` seconds, after
//! which the gate decides again. Experts are frozen; the gate is trained with
//! the same clipped-surrogate update as the experts, at decision level.

use std::hash::Hasher;
use std::sync::Arc;

use fnv::FnvHasher;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{parse_value, Entry, RunConfig};
use crate::env::{observe, Command, EnvConfig, EnvSlot, Observation, StepResult, ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::numerics::Adam;
use crate::physics::{RobotState, NUM_JOINTS};
use crate::ppo::{ppo_update, IterationLog, PolicyNet, RolloutBuffer, RolloutStats};
use crate::rng::{derive_seed, stream_rng};
use crate::terrain::{
    generate_terrain, HeightField, TerrainFamily, TerrainKind, TerrainSpec, RESOLUTION, SPAWN_PAD,
};

pub const NUM_EXPERTS: usize = 3;
pub const GATE_OUTPUTS: usize = NUM_EXPERTS + 1;
pub const MIN_DURATION: f64 = 0.2;
pub const MAX_DURATION: f64 = 2.0;
/// Upper bound on one high-level training episode, seconds.
pub const GATE_EPISODE_CAP: f64 = 25.0;

/// One frozen low-level controller.
#[derive(Debug, Clone, PartialEq)]
pub enum Expert {
    /// Trained policy, sampling from its Gaussian head.
    Network(PolicyNet),
    /// Fixed action regardless of the observation.
    Constant(Vec<f64>),
}

impl Expert {
    /// Holds the nominal stance.
    pub fn standing() -> Self {
        Expert::Constant(vec![0.0; ACT_DIM])
    }

    /// Drives every joint to its limit, which topples the robot within a
    /// second or so.
    pub fn crippled() -> Self {
        Expert::Constant([-3.0, 4.0].repeat(ACT_DIM / 2))
    }

    /// Sampled action; `rng` is only drawn from by network experts.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        match self {
            Expert::Network(p) => {
                let mean = p.mean_action(obs)?;
                Ok(p.head.sample(&mean, rng).0)
            }
            Expert::Constant(a) => Ok(a.clone()),
        }
    }

    fn feed_checksum(&self, h: &mut FnvHasher) {
        let values: Vec<f64> = match self {
            Expert::Network(p) => p.flat_params(),
            Expert::Constant(a) => a.clone(),
        };
        for v in values {
            h.write(&v.to_le_bytes());
        }
    }
}

/// Bumpy, stairs and stepped experts, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertRegistry {
    experts: [Expert; NUM_EXPERTS],
}

impl ExpertRegistry {
    pub fn new(experts: [Expert; NUM_EXPERTS]) -> Self {
        Self { experts }
    }

    pub fn name(index: usize) -> &'static str {
        TerrainFamily::EXPERTS[index].name()
    }

    pub fn get(&self, index: usize) -> &Expert {
        &self.experts[index]
    }

    pub fn experts(&self) -> &[Expert; NUM_EXPERTS] {
        &self.experts
    }

    /// FNV-1a over every parameter, for the frozen-expert check.
    pub fn checksum(&self) -> u64 {
        let mut h = FnvHasher::default();
        for e in &self.experts {
            e.feed_checksum(&mut h);
        }
        h.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    pub confidences: [f64; NUM_EXPERTS],
    pub selected_expert: usize,
    /// Seconds.
    pub duration: f64,
}

impl GateDecision {
    /// Interpret a raw gate output: argmax over the first three values (lowest
    /// index wins ties) and `0.2 + 1.8 sigmoid(raw)` seconds from the fourth.
    pub fn from_output(output: &[f64]) -> Result<Self> {
        if output.len() != GATE_OUTPUTS {
            return Err(Error::Dimension { context: "gate output", expected: GATE_OUTPUTS, got: output.len() });
        }
        let confidences = [output[0], output[1], output[2]];
        let mut selected_expert = 0;
        for (k, &c) in confidences.iter().enumerate().skip(1) {
            if c > confidences[selected_expert] {
                selected_expert = k;
            }
        }
        let sigmoid = 1.0 / (1.0 + (-output[3]).exp());
        let duration = (MIN_DURATION + (MAX_DURATION - MIN_DURATION) * sigmoid).clamp(MIN_DURATION, MAX_DURATION);
        Ok(Self { confidences, selected_expert, duration })
    }
}

/// The gate's observation: the low-level layout, unchanged.
pub fn high_obs(state: &RobotState, command: &Command) -> Observation {
    observe(state, command)
}

/// Where decisions come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Network(PolicyNet),
    /// Always the same expert for the same dwell.
    Fixed { expert: usize, duration: f64 },
}

impl Gate {
    pub fn decide(&self, obs: &[f64]) -> Result<GateDecision> {
        match self {
            Gate::Network(p) => gate_decide(p, obs),
            Gate::Fixed { expert, duration } => {
                let mut out = [0.0; GATE_OUTPUTS];
                out[*expert] = 1.0;
                let mut d = GateDecision::from_output(&out)?;
                d.duration = duration.clamp(MIN_DURATION, MAX_DURATION);
                Ok(d)
            }
        }
    }
}

/// Deterministic decision from the gate's mean output.
pub fn gate_decide(gate: &PolicyNet, obs: &[f64]) -> Result<GateDecision> {
    GateDecision::from_output(&gate.mean_action(obs)?)
}

/// A flat spawn pad followed by sections of expert terrain; the goal is the
/// far end.
#[derive(Debug, Clone)]
pub struct MixedTerrainMap {
    pub sections: Vec<TerrainSpec>,
    pub field: Arc<HeightField>,
}

impl MixedTerrainMap {
    /// `count` sections with kinds drawn from the three expert families and
    /// difficulties uniform in [0, 1].
    pub fn random(seed: u64, count: usize) -> Result<Self> {
        let mut rng = stream_rng(seed, 0);
        let parts: Vec<(TerrainFamily, f64)> = (0..count)
            .map(|_| {
                let family = TerrainFamily::EXPERTS[rng.random_range(0..NUM_EXPERTS)];
                (family, rng.random_range(0.0..=1.0))
            })
            .collect();
        Self::from_sections(&parts, seed)
    }

    pub fn from_sections(parts: &[(TerrainFamily, f64)], seed: u64) -> Result<Self> {
        let pad = TerrainSpec { kind: TerrainKind::Flat, difficulty: 0.0, seed, length: SPAWN_PAD, resolution: RESOLUTION };
        let mut field = generate_terrain(&pad)?;
        let mut sections = Vec::with_capacity(parts.len());
        for (i, &(family, difficulty)) in parts.iter().enumerate() {
            let spec = TerrainSpec::new(family.kind_for(i), difficulty, derive_seed(seed, i as u64));
            field.extend(&generate_terrain(&spec)?)?;
            sections.push(spec);
        }
        Ok(Self { sections, field: Arc::new(field) })
    }

    pub fn spawn_x(&self) -> f64 {
        SPAWN_PAD / 2.0
    }

    pub fn goal_x(&self) -> f64 {
        self.field.end_x()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub x: f64,
    pub velocity: f64,
    pub command: f64,
    pub expert: usize,
    pub reward: f64,
    pub targets: [f64; NUM_JOINTS],
    pub q: [f64; NUM_JOINTS],
}

impl TrajectoryPoint {
    fn after(slot: &EnvSlot, steps: usize, r: &StepResult, expert: usize) -> Self {
        Self {
            time: steps as f64 * slot.config().policy_dt(),
            x: slot.state().base_pos[0],
            velocity: r.velocity,
            command: slot.command().target_forward_velocity,
            expert,
            reward: r.reward,
            targets: *slot.targets(),
            q: slot.state().q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRecord {
    pub time: f64,
    pub decision: GateDecision,
    /// Time the expert actually acted; shorter than the duration only for the
    /// final decision.
    pub dwell: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mission {
    pub trajectory: Vec<TrajectoryPoint>,
    pub states: Vec<RobotState>,
    pub decisions: Vec<DecisionRecord>,
    pub reached_goal: bool,
    pub fell: bool,
    pub elapsed: f64,
}

/// Decide, let the chosen expert act for the decision's duration, repeat;
/// stops at the goal, on a fall or at `time_limit` seconds.
pub fn run_controller(
    gate: &Gate,
    registry: &ExpertRegistry,
    slot: &mut EnvSlot,
    goal_x: f64,
    time_limit: f64,
) -> Result<Mission> {
    let step_dt = slot.config().policy_dt();
    let limit_steps = (time_limit / step_dt).round() as usize;
    let mut mission = Mission {
        trajectory: Vec::new(),
        states: Vec::new(),
        decisions: Vec::new(),
        reached_goal: false,
        fell: false,
        elapsed: 0.0,
    };
    let mut steps = 0;
    let mut obs = slot.observe();
    'outer: while steps < limit_steps {
        let decision = gate.decide(&high_obs(slot.state(), &slot.command()))?;
        let start = steps;
        let mut dwell_steps = 0;
        while (dwell_steps as f64) * step_dt < decision.duration - 1e-9 && steps < limit_steps {
            let action = registry.get(decision.selected_expert).act(&obs, slot.rng_mut())?;
            let r = slot.step(&action)?;
            steps += 1;
            dwell_steps += 1;
            obs = r.obs;
            mission.trajectory.push(TrajectoryPoint::after(slot, steps, &r, decision.selected_expert));
            mission.states.push(slot.state().clone());
            let fell = r.outcome.is_some_and(|o| o.fell);
            let at_goal = slot.state().base_pos[0] >= goal_x;
            if fell || at_goal || r.done {
                mission.fell = fell;
                mission.reached_goal = at_goal && !fell;
                mission.decisions.push(DecisionRecord {
                    time: start as f64 * step_dt,
                    decision,
                    dwell: dwell_steps as f64 * step_dt,
                });
                break 'outer;
            }
        }
        mission.decisions.push(DecisionRecord { time: start as f64 * step_dt, decision, dwell: dwell_steps as f64 * step_dt });
    }
    mission.elapsed = steps as f64 * step_dt;
    Ok(mission)
}

/// One policy alone, with the same stopping rules as [`run_controller`].
/// Decisions record the policy under index `label`.
pub fn run_solo(expert: &Expert, label: usize, slot: &mut EnvSlot, goal_x: f64, time_limit: f64) -> Result<Mission> {
    let step_dt = slot.config().policy_dt();
    let limit_steps = (time_limit / step_dt).round() as usize;
    let mut mission = Mission {
        trajectory: Vec::new(),
        states: Vec::new(),
        decisions: Vec::new(),
        reached_goal: false,
        fell: false,
        elapsed: 0.0,
    };
    let mut obs = slot.observe();
    let mut steps = 0;
    while steps < limit_steps {
        let action = expert.act(&obs, slot.rng_mut())?;
        let r = slot.step(&action)?;
        steps += 1;
        obs = r.obs;
        mission.trajectory.push(TrajectoryPoint::after(slot, steps, &r, label));
        mission.states.push(slot.state().clone());
        let fell = r.outcome.is_some_and(|o| o.fell);
        let at_goal = slot.state().base_pos[0] >= goal_x;
        if fell || at_goal || r.done {
            mission.fell = fell;
            mission.reached_goal = at_goal && !fell;
            break;
        }
    }
    mission.elapsed = steps as f64 * step_dt;
    Ok(mission)
}

/// Settings specific to gate training.
#[derive(Debug, Clone, PartialEq)]
pub struct GateConfig {
    pub num_envs: usize,
    /// Decisions per slot per iteration.
    pub horizon: usize,
    pub map_sections: usize,
    pub command_range: (f64, f64),
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { num_envs: 16, horizon: 8, map_sections: 5, command_range: (0.5, 1.0) }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.command_range;
        if self.num_envs == 0 || self.horizon == 0 || self.map_sections == 0 || !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config("gate: envs, horizon, map sections and the command range must be nonempty".into()));
        }
        Ok(())
    }

    pub fn apply(&mut self, entry: &Entry) -> Result<bool> {
        match entry.key.as_str() {
            "gate_envs" => self.num_envs = parse_value(entry)?,
            "gate_horizon" => self.horizon = parse_value(entry)?,
            "gate_map_sections" => self.map_sections = parse_value(entry)?,
            "gate_command_min" => self.command_range.0 = parse_value(entry)?,
            "gate_command_max" => self.command_range.1 = parse_value(entry)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_text(&self) -> String {
        format!(
            "gate_envs = {}\ngate_horizon = {}\ngate_map_sections = {}\ngate_command_min = {:?}\ngate_command_max = {:?}\n",
            self.num_envs, self.horizon, self.map_sections, self.command_range.0, self.command_range.1
        )
    }
}

/// Produces the map for each new high-level episode.
pub type MapSource = dyn Fn(u64) -> Result<MixedTerrainMap> + Sync;

/// One high-level training env.
struct GateSlot {
    slot: EnvSlot,
    goal_x: f64,
    episode: u64,
    seed: u64,
}

impl GateSlot {
    fn start(&mut self, maps: &MapSource, range: (f64, f64)) -> Result<()> {
        let map = maps(derive_seed(self.seed, self.episode))?;
        self.episode += 1;
        let v = self.slot.rng_mut().random_range(range.0..=range.1);
        self.goal_x = map.goal_x();
        self.slot.reset_at(map.field.clone(), map.spawn_x(), Some(v));
        Ok(())
    }
}

/// Outcome of one gate decision during training.
struct DecisionStep {
    obs: Observation,
    action: Vec<f64>,
    log_prob: f64,
    value: f64,
    reward: f64,
    done: bool,
    expert: usize,
    velocity_error: f64,
    steps: usize,
}

fn decision_step(
    gs: &mut GateSlot,
    gate: &PolicyNet,
    registry: &ExpertRegistry,
    maps: &MapSource,
    gconf: &GateConfig,
    gamma: f64,
) -> Result<DecisionStep> {
    let obs = gs.slot.observe();
    let mean = gate.mean_action(&obs)?;
    let (action, log_prob) = gate.head.sample(&mean, gs.slot.rng_mut());
    let value = gate.value(&obs)?;
    let decision = GateDecision::from_output(&action)?;
    let step_dt = gs.slot.config().policy_dt();
    let mut reward = 0.0;
    let mut err = 0.0;
    let mut steps = 0;
    let mut low_obs = obs;
    let mut end: Option<bool> = None;
    while (steps as f64) * step_dt < decision.duration - 1e-9 {
        let a = registry.get(decision.selected_expert).act(&low_obs, gs.slot.rng_mut())?;
        let r = gs.slot.step(&a)?;
        steps += 1;
        reward += r.reward;
        err += (r.velocity - gs.slot.command().target_forward_velocity).abs();
        low_obs = r.obs;
        if let Some(o) = r.outcome {
            end = Some(o.fell);
            break;
        }
        if gs.slot.state().base_pos[0] >= gs.goal_x {
            end = Some(false);
            break;
        }
    }
    if let Some(fell) = end {
        if !fell {
            reward += gamma * gate.value(&low_obs)?;
        }
        gs.start(maps, gconf.command_range)?;
    }
    Ok(DecisionStep {
        obs,
        action,
        log_prob,
        value,
        reward,
        done: end.is_some(),
        expert: decision.selected_expert,
        velocity_error: err / steps.max(1) as f64,
        steps,
    })
}

/// Per-iteration statistics of gate training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateIteration {
    pub log: IterationLog,
    pub selection_counts: [usize; NUM_EXPERTS],
}

/// Train `gate` over frozen experts. High-level episodes end at the goal, on
/// a fall, or after [`GATE_EPISODE_CAP`] seconds. The per-decision reward is
/// the sum of the low-level rewards collected during the dwell.
pub fn train_gate(
    gate: PolicyNet,
    registry: &ExpertRegistry,
    maps: &MapSource,
    iterations: usize,
    config: &RunConfig,
    seed: u64,
    mut on_iteration: impl FnMut(&GateIteration, &PolicyNet) -> Result<()>,
) -> Result<(PolicyNet, Vec<GateIteration>)> {
    config.env.validate()?;
    config.ppo.validate()?;
    config.gate.validate()?;
    if gate.act_dim() != GATE_OUTPUTS {
        return Err(Error::Dimension { context: "gate policy outputs", expected: GATE_OUTPUTS, got: gate.act_dim() });
    }
    let frozen = registry.checksum();
    let hyper = &config.ppo;
    let env_config = EnvConfig { episode_length: GATE_EPISODE_CAP, ..config.env.clone() };
    let mut slots: Vec<GateSlot> = (0..config.gate.num_envs)
        .map(|i| {
            let mut gs = GateSlot {
                slot: EnvSlot::new(&env_config, stream_rng(derive_seed(seed, 1), i as u64)),
                goal_x: 0.0,
                episode: 0,
                seed: derive_seed(derive_seed(seed, 2), i as u64),
            };
            gs.start(maps, config.gate.command_range)?;
            Ok(gs)
        })
        .collect::<Result<_>>()?;

    let mut policy = gate;
    let mut adam = Adam::new(policy.param_count(), hyper.learning_rate);
    let mut rng: ChaCha8Rng = stream_rng(derive_seed(seed, 3), 0);
    let mut history = Vec::with_capacity(iterations);
    let n = slots.len();
    for iter in 1..=iterations {
        let mut buf = RolloutBuffer::new(config.gate.horizon, n, OBS_DIM, GATE_OUTPUTS);
        let mut counts = [0; NUM_EXPERTS];
        let (mut err_sum, mut total_steps) = (0.0, 0usize);
        for t in 0..config.gate.horizon {
            let results: Vec<Result<DecisionStep>> = slots
                .par_iter_mut()
                .map(|gs| decision_step(gs, &policy, registry, maps, &config.gate, hyper.gamma))
                .collect();
            for (e, r) in results.into_iter().enumerate() {
                let d = r?;
                let i = t * n + e;
                buf.obs.row_mut(i).assign(&ArrayView1::from(&d.obs));
                buf.actions.row_mut(i).assign(&ArrayView1::from(&d.action));
                buf.log_probs[i] = d.log_prob;
                buf.values[i] = d.value;
                buf.rewards[i] = d.reward;
                buf.dones[i] = d.done;
                counts[d.expert] += 1;
                err_sum += d.velocity_error * d.steps as f64;
                total_steps += d.steps;
            }
        }
        let last: Array2<f64> = Array2::from_shape_fn((n, OBS_DIM), |(e, j)| slots[e].slot.observe()[j]);
        let (_, last_values) = policy.evaluate(last.view())?;
        buf.last_values = last_values.to_vec();
        buf.compute_gae(hyper.gamma, hyper.gae_lambda);
        let update = ppo_update(&mut policy, &mut adam, &buf, hyper, &mut rng)?;
        if registry.checksum() != frozen {
            panic!("expert parameters changed during gate training");
        }
        let entry = GateIteration {
            log: IterationLog {
                iter,
                rollout: RolloutStats {
                    mean_reward: buf.rewards.iter().sum::<f64>() / buf.len() as f64,
                    vel_err: err_sum / total_steps.max(1) as f64,
                    mean_row: 0.0,
                },
                update,
            },
            selection_counts: counts,
        };
        on_iteration(&entry, &policy)?;
        history.push(entry);
    }
    Ok((policy, history))
}
