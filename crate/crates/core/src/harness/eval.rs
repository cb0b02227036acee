//! Completion-rate evaluation on fixed strips.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::env::{EnvConfig, EnvSlot};
use crate::error::{Error, Result};
use crate::hierarchy::{run_controller, run_solo, Expert, ExpertRegistry, Gate, Mission, TrajectoryPoint};
use crate::ppo::PolicyNet;
use crate::rng::{derive_seed, stream_rng};
use crate::terrain::{eval_strip, TerrainFamily, SPAWN_PAD};

pub const DEFAULT_TRIALS: usize = 15;
pub const MTAC_LABEL: &str = "MTAC";
pub const BASELINE_LABEL: &str = "Generalized PPO";

pub const RECORD_HEADER: &str = "policy,terrain,difficulty,velocity,trials,completions,completion_rate,mean_velocity_error,mean_time_to_complete,non_finite_trials,seed";

/// What drives the robot during evaluation.
#[derive(Debug, Clone)]
pub enum PolicySource {
    Expert(PolicyNet),
    Hierarchy { gate: PolicyNet, registry: ExpertRegistry },
    Baseline(PolicyNet),
}

impl PolicySource {
    /// Label used in result tables.
    pub fn label(&self) -> &'static str {
        match self {
            PolicySource::Baseline(_) => BASELINE_LABEL,
            _ => MTAC_LABEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSpec {
    pub terrain: TerrainFamily,
    pub difficulty: f64,
    /// m/s, forward.
    pub velocity: f64,
    pub trials: usize,
    pub seed: u64,
}

impl EvalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("evaluation needs at least one trial".into()));
        }
        if !(self.velocity > 0.0 && self.velocity.is_finite()) {
            return Err(Error::Config(format!("velocity must be positive, got {}", self.velocity)));
        }
        if !(0.0..=1.0).contains(&self.difficulty) {
            return Err(Error::Config(format!("difficulty {} outside [0, 1]", self.difficulty)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub success: bool,
    pub fell: bool,
    /// The simulation produced a non-finite state; counted as a failure.
    pub non_finite: bool,
    pub elapsed: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub policy: String,
    pub spec: EvalSpec,
    pub completions: usize,
    pub completion_rate: f64,
    /// Mean |v - v_cmd| over every policy step of every trial.
    pub mean_velocity_error: f64,
    /// Over successful trials; NaN when there are none.
    pub mean_time_to_complete: f64,
    pub non_finite_trials: usize,
}

impl EvalRecord {
    pub fn from_trials(policy: &str, spec: &EvalSpec, trials: &[TrialResult]) -> Self {
        let completions = trials.iter().filter(|t| t.success).count();
        let (err, steps) = trials
            .iter()
            .flat_map(|t| &t.trajectory)
            .fold((0.0, 0usize), |(s, n), p| (s + (p.velocity - p.command).abs(), n + 1));
        let times: Vec<f64> = trials.iter().filter(|t| t.success).map(|t| t.elapsed).collect();
        Self {
            policy: policy.to_string(),
            spec: spec.clone(),
            completions,
            completion_rate: completions as f64 / trials.len() as f64,
            mean_velocity_error: if steps > 0 { err / steps as f64 } else { f64::NAN },
            mean_time_to_complete: if times.is_empty() { f64::NAN } else { times.iter().sum::<f64>() / times.len() as f64 },
            non_finite_trials: trials.iter().filter(|t| t.non_finite).count(),
        }
    }

    pub fn to_csv(&self) -> String {
        format!("{RECORD_HEADER}\n{self}\n")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(RECORD_HEADER) {
            return Err(Error::Config("not an evaluation record: header mismatch".into()));
        }
        let row = lines.next().ok_or_else(|| Error::Config("evaluation record has no data row".into()))?;
        if lines.next().is_some() {
            return Err(Error::Config("evaluation record has more than one row".into()));
        }
        row.parse()
    }
}

impl fmt::Display for EvalRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.spec;
        write!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.policy,
            s.terrain,
            s.difficulty,
            s.velocity,
            s.trials,
            self.completions,
            self.completion_rate,
            self.mean_velocity_error,
            self.mean_time_to_complete,
            self.non_finite_trials,
            s.seed
        )
    }
}

impl FromStr for EvalRecord {
    type Err = Error;

    fn from_str(row: &str) -> Result<Self> {
        let cells: Vec<&str> = row.trim().split(',').collect();
        if cells.len() != RECORD_HEADER.split(',').count() {
            return Err(Error::Config(format!("evaluation record row has {} cells", cells.len())));
        }
        fn num<T: FromStr>(cell: &str, what: &str) -> Result<T> {
            cell.parse().map_err(|_| Error::Config(format!("bad {what} `{cell}` in evaluation record")))
        }
        let spec = EvalSpec {
            terrain: cells[1].parse()?,
            difficulty: num(cells[2], "difficulty")?,
            velocity: num(cells[3], "velocity")?,
            trials: num(cells[4], "trials")?,
            seed: num(cells[10], "seed")?,
        };
        Ok(Self {
            policy: cells[0].to_string(),
            spec,
            completions: num(cells[5], "completions")?,
            completion_rate: num(cells[6], "completion rate")?,
            mean_velocity_error: num(cells[7], "velocity error")?,
            mean_time_to_complete: num(cells[8], "completion time")?,
            non_finite_trials: num(cells[9], "non-finite count")?,
        })
    }
}

/// Environment settings used for every evaluation trial: no randomization,
/// no joint noise, and an episode as long as the time budget.
pub fn eval_env_config(base: &EnvConfig, budget: f64) -> EnvConfig {
    EnvConfig { joint_noise: 0.0, episode_length: budget, ..base.nominal() }
}

/// Seconds allowed to cross a strip of `length` metres at `velocity`.
pub fn time_budget(length: f64, velocity: f64) -> f64 {
    2.0 * length / velocity
}

/// One trial: a strip seeded from the spec seed and the trial index, spawn
/// in the middle of the pad, fixed forward command.
pub fn run_trial(source: &PolicySource, spec: &EvalSpec, base: &EnvConfig, trial: usize) -> Result<TrialResult> {
    let seed = derive_seed(spec.seed, trial as u64);
    let strip = std::sync::Arc::new(eval_strip(spec.terrain, spec.difficulty, seed)?);
    let budget = time_budget(strip.length(), spec.velocity);
    let config = eval_env_config(base, budget);
    let mut slot = EnvSlot::new(&config, stream_rng(seed, 1));
    let goal = strip.end_x();
    slot.reset_at(strip, SPAWN_PAD / 2.0, Some(spec.velocity));
    let outcome: Result<Mission> = match source {
        PolicySource::Expert(p) | PolicySource::Baseline(p) => {
            run_solo(&Expert::Network(p.clone()), 0, &mut slot, goal, budget)
        }
        PolicySource::Hierarchy { gate, registry } => {
            run_controller(&Gate::Network(gate.clone()), registry, &mut slot, goal, budget)
        }
    };
    match outcome {
        Ok(m) => Ok(TrialResult {
            success: m.reached_goal,
            fell: m.fell,
            non_finite: false,
            elapsed: m.elapsed,
            trajectory: m.trajectory,
        }),
        Err(Error::Numerical(_)) => Ok(TrialResult {
            success: false,
            fell: false,
            non_finite: true,
            elapsed: 0.0,
            trajectory: Vec::new(),
        }),
        Err(e) => Err(e),
    }
}

/// Run every trial (in parallel) and aggregate.
pub fn evaluate(source: &PolicySource, spec: &EvalSpec, base: &EnvConfig) -> Result<(EvalRecord, Vec<TrialResult>)> {
    spec.validate()?;
    let trials = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(source, spec, base, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((EvalRecord::from_trials(source.label(), spec, &trials), trials))
}
