//! The locomotion MDP.
//!
//! Observation layout (21 values):
//!
//! | index  | content                         |
//! |--------|---------------------------------|
//! | 0..8   | joint angles, rad               |
//! | 8..16  | joint velocities x 0.05         |
//! | 16, 17 | base vx, vz, m/s                |
//! | 18     | base pitch, rad                 |
//! | 19     | base pitch rate x 0.25          |
//! | 20     | commanded forward velocity, m/s |
//!
//! Actions are eight joint-target offsets from the nominal stance, scaled by
//! `action_scale` and clamped to the joint limits.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{parse_value, Entry};
use crate::error::{Error, Result};
use crate::physics::{
    check_fall, foot_positions, pd_torque, step_dynamics, RobotModel, RobotState, NUM_JOINTS,
};
use crate::rng::stream_rng;
use crate::terrain::{CurriculumGrid, HeightField, GRID_COLS, GRID_ROWS};

pub const OBS_DIM: usize = 21;
pub const ACT_DIM: usize = NUM_JOINTS;
pub const COMMAND_INDEX: usize = 20;
pub const QDOT_SCALE: f64 = 0.05;
pub const PITCH_RATE_SCALE: f64 = 0.25;
/// Hips straight down, knees bent 0.4 rad.
pub const NOMINAL_STANCE: [f64; NUM_JOINTS] = [0.0, 0.4, 0.0, 0.4, 0.0, 0.4, 0.0, 0.4];
/// Width of the velocity-tracking kernel `exp(-err^2 / TRACKING_WIDTH)`.
pub const TRACKING_WIDTH: f64 = 0.25;
/// Feet start this far above the highest terrain point below them.
const SPAWN_CLEARANCE: f64 = 0.002;

pub type Observation = [f64; OBS_DIM];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub target_forward_velocity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardWeights {
    pub velocity: f64,
    pub alive: f64,
    pub torque: f64,
    pub pitch: f64,
    pub joint_velocity: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { velocity: 1.0, alive: 0.2, torque: 1e-5, pitch: 0.3, joint_velocity: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub dt: f64,
    pub control_decimation: usize,
    /// Seconds.
    pub episode_length: f64,
    pub num_envs: usize,
    pub reward: RewardWeights,
    pub friction_range: (f64, f64),
    /// Added to the base mass, kg.
    pub payload_range: (f64, f64),
    /// Seconds between pushes; 0 disables them.
    pub push_interval: f64,
    pub push_max_velocity: f64,
    pub command_range: (f64, f64),
    pub joint_noise: f64,
    pub spawn_jitter: f64,
    pub action_scale: f64,
    pub promote_fraction: f64,
    pub demote_fraction: f64,
    /// Friction, payload and pushes are drawn only when set.
    pub randomize: bool,
    pub model: RobotModel,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            control_decimation: 4,
            episode_length: 20.0,
            num_envs: 256,
            reward: RewardWeights::default(),
            friction_range: (0.4, 1.0),
            payload_range: (-3.0, 5.0),
            push_interval: 5.0,
            push_max_velocity: 0.5,
            command_range: (-1.0, 1.0),
            joint_noise: 0.05,
            spawn_jitter: 0.5,
            action_scale: 0.5,
            promote_fraction: 0.8,
            demote_fraction: 0.4,
            randomize: true,
            model: RobotModel::default(),
        }
    }
}

impl EnvConfig {
    pub fn policy_dt(&self) -> f64 {
        self.dt * self.control_decimation as f64
    }

    /// Policy steps per episode.
    pub fn max_steps(&self) -> usize {
        (self.episode_length / self.policy_dt()).round() as usize
    }

    /// Same settings without randomization, for evaluation and replays.
    pub fn nominal(&self) -> Self {
        Self { randomize: false, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("env: {what}")));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.control_decimation < 1 {
            return bad("control_decimation must be at least 1");
        }
        if !(self.episode_length > 0.0 && self.episode_length.is_finite()) {
            return bad("episode_length must be positive");
        }
        if self.max_steps() == 0 {
            return bad("episode shorter than one policy step");
        }
        if self.num_envs == 0 {
            return bad("num_envs must be positive");
        }
        for (name, (lo, hi)) in [
            ("friction", self.friction_range),
            ("payload", self.payload_range),
            ("command", self.command_range),
        ] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return bad(&format!("{name} range [{lo}, {hi}] is empty"));
            }
        }
        if self.friction_range.0 < 0.0 {
            return bad("friction must be nonnegative");
        }
        if self.model.base_mass + self.payload_range.0 <= 0.0 {
            return bad("payload range makes the base massless");
        }
        let r = &self.reward;
        for v in [r.velocity, r.alive, r.torque, r.pitch, r.joint_velocity] {
            if !v.is_finite() {
                return bad("reward weights must be finite");
            }
        }
        for (name, v) in [
            ("push_interval", self.push_interval),
            ("push_max_velocity", self.push_max_velocity),
            ("joint_noise", self.joint_noise),
            ("spawn_jitter", self.spawn_jitter),
            ("action_scale", self.action_scale),
            ("promote_fraction", self.promote_fraction),
            ("demote_fraction", self.demote_fraction),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be nonnegative"));
            }
        }
        if self.demote_fraction > self.promote_fraction {
            return bad("demote_fraction exceeds promote_fraction");
        }
        self.model.validate()
    }

    /// Claim one config entry. Returns `false` for keys this section does not own.
    pub fn apply(&mut self, entry: &Entry) -> Result<bool> {
        let m = &mut self.model;
        let target: &mut f64 = match entry.key.as_str() {
            "control_decimation" => {
                self.control_decimation = parse_value(entry)?;
                return Ok(true);
            }
            "num_envs" => {
                self.num_envs = parse_value(entry)?;
                return Ok(true);
            }
            "randomize" => {
                self.randomize = parse_value(entry)?;
                return Ok(true);
            }
            "dt" => &mut self.dt,
            "episode_length" => &mut self.episode_length,
            "w_velocity" => &mut self.reward.velocity,
            "w_alive" => &mut self.reward.alive,
            "w_torque" => &mut self.reward.torque,
            "w_pitch" => &mut self.reward.pitch,
            "w_joint_velocity" => &mut self.reward.joint_velocity,
            "friction_min" => &mut self.friction_range.0,
            "friction_max" => &mut self.friction_range.1,
            "payload_min" => &mut self.payload_range.0,
            "payload_max" => &mut self.payload_range.1,
            "push_interval" => &mut self.push_interval,
            "push_max_velocity" => &mut self.push_max_velocity,
            "command_min" => &mut self.command_range.0,
            "command_max" => &mut self.command_range.1,
            "joint_noise" => &mut self.joint_noise,
            "spawn_jitter" => &mut self.spawn_jitter,
            "action_scale" => &mut self.action_scale,
            "promote_fraction" => &mut self.promote_fraction,
            "demote_fraction" => &mut self.demote_fraction,
            "kp" => &mut m.kp,
            "kd" => &mut m.kd,
            "base_mass" => &mut m.base_mass,
            "joint_torque_limit" => &mut m.joint_torque_limit,
            "default_friction" => &mut m.foot_friction_coeff,
            "contact_stiffness" => &mut m.contact_stiffness,
            "contact_damping" => &mut m.contact_damping,
            "friction_damping" => &mut m.friction_damping,
            _ => return Ok(false),
        };
        *target = parse_value(entry)?;
        Ok(true)
    }

    pub fn to_text(&self) -> String {
        let m = &self.model;
        let r = &self.reward;
        let mut out = format!(
            "dt = {}\ncontrol_decimation = {}\nepisode_length = {}\nnum_envs = {}\nrandomize = {}\n",
            self.dt, self.control_decimation, self.episode_length, self.num_envs, self.randomize
        );
        for (k, v) in [
            ("w_velocity", r.velocity),
            ("w_alive", r.alive),
            ("w_torque", r.torque),
            ("w_pitch", r.pitch),
            ("w_joint_velocity", r.joint_velocity),
            ("friction_min", self.friction_range.0),
            ("friction_max", self.friction_range.1),
            ("payload_min", self.payload_range.0),
            ("payload_max", self.payload_range.1),
            ("push_interval", self.push_interval),
            ("push_max_velocity", self.push_max_velocity),
            ("command_min", self.command_range.0),
            ("command_max", self.command_range.1),
            ("joint_noise", self.joint_noise),
            ("spawn_jitter", self.spawn_jitter),
            ("action_scale", self.action_scale),
            ("promote_fraction", self.promote_fraction),
            ("demote_fraction", self.demote_fraction),
            ("kp", m.kp),
            ("kd", m.kd),
            ("base_mass", m.base_mass),
            ("joint_torque_limit", m.joint_torque_limit),
            ("default_friction", m.foot_friction_coeff),
            ("contact_stiffness", m.contact_stiffness),
            ("contact_damping", m.contact_damping),
            ("friction_damping", m.friction_damping),
        ] {
            out.push_str(&format!("{k} = {v:?}\n"));
        }
        out
    }
}

pub fn observe(state: &RobotState, command: &Command) -> Observation {
    let mut obs = [0.0; OBS_DIM];
    obs[..8].copy_from_slice(&state.q);
    for (o, w) in obs[8..16].iter_mut().zip(&state.qdot) {
        *o = w * QDOT_SCALE;
    }
    obs[16] = state.base_vel[0];
    obs[17] = state.base_vel[1];
    obs[18] = state.base_pitch;
    obs[19] = state.base_pitch_rate * PITCH_RATE_SCALE;
    obs[COMMAND_INDEX] = command.target_forward_velocity;
    obs
}

/// Forward velocity over one policy step, from the base displacement.
pub fn step_velocity(prev: &RobotState, state: &RobotState, config: &EnvConfig) -> f64 {
    (state.base_pos[0] - prev.base_pos[0]) / config.policy_dt()
}

/// Per-step reward, clipped at zero.
pub fn compute_reward(
    prev: &RobotState,
    state: &RobotState,
    command: &Command,
    torques: &[f64; NUM_JOINTS],
    config: &EnvConfig,
) -> f64 {
    let w = &config.reward;
    let err = step_velocity(prev, state, config) - command.target_forward_velocity;
    let torque_sq: f64 = torques.iter().map(|t| t * t).sum();
    let qdot_sq: f64 = state.qdot.iter().map(|v| v * v).sum();
    let r = w.velocity * (-err * err / TRACKING_WIDTH).exp() + w.alive
        - w.torque * torque_sq
        - w.pitch * state.base_pitch * state.base_pitch
        - w.joint_velocity * qdot_sq;
    r.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub distance_traveled: f64,
    pub commanded_distance: f64,
    pub fell: bool,
    pub cell: (usize, usize),
}

/// Promote after covering `promote_fraction` of the commanded distance
/// upright, demote after a fall or less than `demote_fraction` of it. A new
/// column is drawn whenever the row changes.
pub fn update_curriculum<R: Rng + ?Sized>(
    cell: (usize, usize),
    outcome: &EpisodeOutcome,
    config: &EnvConfig,
    rng: &mut R,
) -> (usize, usize) {
    let (row, col) = cell;
    let target = outcome.commanded_distance;
    let new_row = if outcome.fell || outcome.distance_traveled < config.demote_fraction * target {
        row.saturating_sub(1)
    } else if outcome.distance_traveled >= config.promote_fraction * target {
        (row + 1).min(GRID_ROWS - 1)
    } else {
        row
    };
    if new_row == row {
        (row, col)
    } else {
        (new_row, rng.random_range(0..GRID_COLS))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    /// Mean forward velocity over the step.
    pub velocity: f64,
    pub outcome: Option<EpisodeOutcome>,
}

/// One simulated robot with its own generator.
#[derive(Debug, Clone)]
pub struct EnvSlot {
    config: EnvConfig,
    model: RobotModel,
    state: RobotState,
    terrain: Arc<HeightField>,
    command: Command,
    cell: (usize, usize),
    rng: ChaCha8Rng,
    steps: usize,
    start_x: f64,
    targets: [f64; NUM_JOINTS],
    non_finite_actions: u64,
}

impl EnvSlot {
    /// A slot standing on flat ground; call one of the resets before use.
    pub fn new(config: &EnvConfig, rng: ChaCha8Rng) -> Self {
        let model = config.model.clone();
        Self {
            state: RobotState::at_rest(0.0, model.stance_height(NOMINAL_STANCE[1]), NOMINAL_STANCE),
            terrain: Arc::new(HeightField::flat(1.0, 0.02)),
            config: config.clone(),
            model,
            command: Command { target_forward_velocity: 0.0 },
            cell: (0, 0),
            rng,
            steps: 0,
            start_x: 0.0,
            targets: NOMINAL_STANCE,
            non_finite_actions: 0,
        }
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn terrain(&self) -> &Arc<HeightField> {
        &self.terrain
    }

    pub fn command(&self) -> Command {
        self.command
    }

    pub fn cell(&self) -> (usize, usize) {
        self.cell
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Joint targets applied during the last step.
    pub fn targets(&self) -> &[f64; NUM_JOINTS] {
        &self.targets
    }

    pub fn non_finite_actions(&self) -> u64 {
        self.non_finite_actions
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn observe(&self) -> Observation {
        observe(&self.state, &self.command)
    }

    /// Spawn at the centre of a grid cell (jittered) with a sampled command.
    pub fn reset(&mut self, grid: &CurriculumGrid, cell: (usize, usize)) -> Observation {
        let jitter = self.config.spawn_jitter;
        let offset = if jitter > 0.0 { self.rng.random_range(-jitter..=jitter) } else { 0.0 };
        let x = grid.spawn_x(cell.1) + offset;
        self.cell = cell;
        self.reset_at(grid.row_field(cell.0).clone(), x, None)
    }

    /// Spawn at `x` on `terrain`. A `None` command is sampled from the
    /// configured range.
    pub fn reset_at(&mut self, terrain: Arc<HeightField>, x: f64, command: Option<f64>) -> Observation {
        let mut q = NOMINAL_STANCE;
        let noise = self.config.joint_noise;
        if noise > 0.0 {
            for v in &mut q {
                *v += self.rng.random_range(-noise..=noise);
            }
        }
        self.model = self.config.model.clone();
        if self.config.randomize {
            let (lo, hi) = self.config.friction_range;
            self.model.foot_friction_coeff = self.rng.random_range(lo..=hi);
            let (lo, hi) = self.config.payload_range;
            self.model.base_mass += self.rng.random_range(lo..=hi);
        }
        let velocity = command.unwrap_or_else(|| {
            let (lo, hi) = self.config.command_range;
            self.rng.random_range(lo..=hi)
        });
        self.command = Command { target_forward_velocity: velocity };

        let mut state = RobotState::at_rest(x, 0.0, q);
        let lift = foot_positions(&state, &self.model)
            .iter()
            .map(|f| terrain.height_at(f[0]) - f[1])
            .fold(f64::NEG_INFINITY, f64::max);
        state.base_pos[1] = lift + SPAWN_CLEARANCE;
        self.state = state;
        self.terrain = terrain;
        self.steps = 0;
        self.start_x = x;
        self.targets = q;
        self.observe()
    }

    /// Place the robot in an arbitrary state, keeping terrain and command.
    pub fn set_state(&mut self, state: RobotState) {
        self.state = state;
    }

    fn outcome(&self, fell: bool) -> EpisodeOutcome {
        let v = self.command.target_forward_velocity;
        let direction = if v < 0.0 { -1.0 } else { 1.0 };
        let elapsed = self.steps as f64 * self.config.policy_dt();
        EpisodeOutcome {
            distance_traveled: ((self.state.base_pos[0] - self.start_x) * direction).max(0.0),
            commanded_distance: v.abs() * elapsed,
            fell,
            cell: self.cell,
        }
    }

    /// One policy step: `control_decimation` physics steps under PD control.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != ACT_DIM {
            return Err(Error::Dimension { context: "env action", expected: ACT_DIM, got: action.len() });
        }
        let finite = action.iter().all(|a| a.is_finite());
        if !finite {
            self.non_finite_actions += 1;
        }
        for j in 0..NUM_JOINTS {
            let a = if finite { action[j] } else { 0.0 };
            let (lo, hi) = self.model.joint_limits(j);
            self.targets[j] = (NOMINAL_STANCE[j] + self.config.action_scale * a).clamp(lo, hi);
        }

        let prev = self.state.clone();
        let mut torques = [0.0; NUM_JOINTS];
        let mut fell = false;
        for _ in 0..self.config.control_decimation {
            torques = pd_torque(&self.targets, &self.state, &self.model);
            let (next, _) =
                step_dynamics(&self.state, &torques, &self.terrain, &self.model, self.config.dt)?;
            self.state = next;
            if check_fall(&self.state, &self.terrain, &self.model) {
                fell = true;
                break;
            }
        }
        self.steps += 1;

        let reward = compute_reward(&prev, &self.state, &self.command, &torques, &self.config);
        let velocity = step_velocity(&prev, &self.state, &self.config);
        let done = fell || self.steps >= self.config.max_steps();
        if !done && self.config.randomize && self.config.push_interval > 0.0 {
            let every = (self.config.push_interval / self.config.policy_dt()).round().max(1.0) as usize;
            if self.steps.is_multiple_of(every) {
                let m = self.config.push_max_velocity;
                self.state.base_vel[0] += self.rng.random_range(-m..=m);
            }
        }
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done,
            velocity,
            outcome: done.then(|| self.outcome(fell)),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BatchStep {
    /// Observations after the step; slots that finished are already reset.
    pub obs: Array2<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub velocities: Vec<f64>,
    pub commands: Vec<f64>,
    pub outcomes: Vec<Option<EpisodeOutcome>>,
    /// Observation reached by slots that finished, before their reset.
    pub terminal_obs: Vec<Option<Observation>>,
}

type SlotStep = (StepResult, f64, Option<Observation>);

/// Many slots on one curriculum grid. Slot `i` draws from stream `i` of the
/// seed, so adding or removing other slots never changes its trajectory.
#[derive(Debug, Clone)]
pub struct VecEnv {
    grid: Arc<CurriculumGrid>,
    slots: Vec<EnvSlot>,
}

impl VecEnv {
    pub fn new(config: &EnvConfig, grid: Arc<CurriculumGrid>, seed: u64) -> Result<Self> {
        config.validate()?;
        let slots = (0..config.num_envs)
            .map(|i| {
                let mut slot = EnvSlot::new(config, stream_rng(seed, i as u64));
                let col = slot.rng.random_range(0..GRID_COLS);
                slot.reset(&grid, (0, col));
                slot
            })
            .collect();
        Ok(Self { grid, slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[EnvSlot] {
        &self.slots
    }

    pub fn grid(&self) -> &Arc<CurriculumGrid> {
        &self.grid
    }

    pub fn observations(&self) -> Array2<f64> {
        let mut obs = Array2::zeros((self.slots.len(), OBS_DIM));
        for (mut row, slot) in obs.rows_mut().into_iter().zip(&self.slots) {
            row.assign(&ndarray::ArrayView1::from(&slot.observe()));
        }
        obs
    }

    pub fn mean_row(&self) -> f64 {
        self.slots.iter().map(|s| s.cell.0 as f64).sum::<f64>() / self.slots.len().max(1) as f64
    }

    pub fn non_finite_actions(&self) -> u64 {
        self.slots.iter().map(|s| s.non_finite_actions).sum()
    }

    fn step_slot(slot: &mut EnvSlot, grid: &CurriculumGrid, action: &[f64]) -> Result<SlotStep> {
        let command = slot.command.target_forward_velocity;
        let mut result = slot.step(action)?;
        let mut terminal = None;
        if let Some(outcome) = &result.outcome {
            let next = update_curriculum(slot.cell, outcome, &slot.config, &mut slot.rng);
            terminal = Some(std::mem::replace(&mut result.obs, slot.reset(grid, next)));
        }
        Ok((result, command, terminal))
    }

    /// Step every slot in parallel.
    pub fn batch_step(&mut self, actions: ArrayView2<'_, f64>) -> Result<BatchStep> {
        self.check_actions(actions)?;
        let grid = &self.grid;
        let actions = actions.as_standard_layout();
        let flat = actions.as_slice().expect("standard layout");
        let results: Vec<_> = self
            .slots
            .par_iter_mut()
            .zip(flat.par_chunks(ACT_DIM))
            .map(|(slot, a)| Self::step_slot(slot, grid, a))
            .collect();
        Self::gather(results)
    }

    /// Reference implementation of [`VecEnv::batch_step`] on one thread.
    pub fn batch_step_serial(&mut self, actions: ArrayView2<'_, f64>) -> Result<BatchStep> {
        self.check_actions(actions)?;
        let grid = &self.grid;
        let results: Vec<_> = self
            .slots
            .iter_mut()
            .zip(actions.outer_iter())
            .map(|(slot, a)| Self::step_slot(slot, grid, &a.to_vec()))
            .collect();
        Self::gather(results)
    }

    fn check_actions(&self, actions: ArrayView2<'_, f64>) -> Result<()> {
        if actions.nrows() != self.slots.len() {
            return Err(Error::Dimension { context: "batch actions", expected: self.slots.len(), got: actions.nrows() });
        }
        if actions.ncols() != ACT_DIM {
            return Err(Error::Dimension { context: "batch actions", expected: ACT_DIM, got: actions.ncols() });
        }
        Ok(())
    }

    fn gather(results: Vec<Result<SlotStep>>) -> Result<BatchStep> {
        let n = results.len();
        let mut out = BatchStep {
            obs: Array2::zeros((n, OBS_DIM)),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            velocities: Vec::with_capacity(n),
            commands: Vec::with_capacity(n),
            outcomes: Vec::with_capacity(n),
            terminal_obs: Vec::with_capacity(n),
        };
        for (i, r) in results.into_iter().enumerate() {
            let (r, command, terminal) = r?;
            out.obs.row_mut(i).assign(&ndarray::ArrayView1::from(&r.obs));
            out.rewards.push(r.reward);
            out.dones.push(r.done);
            out.velocities.push(r.velocity);
            out.commands.push(command);
            out.outcomes.push(r.outcome);
            out.terminal_obs.push(terminal);
        }
        Ok(out)
    }
}
