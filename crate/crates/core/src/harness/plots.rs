//! Trajectory logs and whitespace-separated plot data.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::hierarchy::{DecisionRecord, ExpertRegistry, TrajectoryPoint};
use crate::physics::NUM_JOINTS;
use crate::ppo::METRICS_HEADER;

/// Joint shown in the joint-tracking file: the front-left knee.
pub const PLOT_JOINT: usize = 1;

pub const VELOCITY_FILE: &str = "velocity.dat";
pub const JOINT_FILE: &str = "joint.dat";
pub const LEARNING_CURVE_FILE: &str = "learning_curve.dat";

fn trajectory_header() -> String {
    let mut h = String::from("time,x,command,velocity,expert,reward");
    for j in 0..NUM_JOINTS {
        h.push_str(&format!(",target_{j}"));
    }
    for j in 0..NUM_JOINTS {
        h.push_str(&format!(",q_{j}"));
    }
    h
}

/// One row per policy step, full precision.
pub fn trajectory_csv(trajectory: &[TrajectoryPoint]) -> String {
    let mut out = trajectory_header();
    out.push('\n');
    for p in trajectory {
        out.push_str(&format!("{},{},{},{},{},{}", p.time, p.x, p.command, p.velocity, p.expert, p.reward));
        for v in p.targets.iter().chain(&p.q) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryPoint>> {
    let mut lines = text.lines();
    if lines.next() != Some(trajectory_header().as_str()) {
        return Err(Error::Config("not a trajectory log: header mismatch".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || Error::Config(format!("trajectory log line {}: malformed row", i + 2));
            let cells: Vec<f64> = line.split(',').map(|c| c.parse().map_err(|_| bad())).collect::<Result<_>>()?;
            if cells.len() != 6 + 2 * NUM_JOINTS {
                return Err(bad());
            }
            let mut targets = [0.0; NUM_JOINTS];
            let mut q = [0.0; NUM_JOINTS];
            targets.copy_from_slice(&cells[6..6 + NUM_JOINTS]);
            q.copy_from_slice(&cells[6 + NUM_JOINTS..]);
            Ok(TrajectoryPoint {
                time: cells[0],
                x: cells[1],
                command: cells[2],
                velocity: cells[3],
                expert: cells[4] as usize,
                reward: cells[5],
                targets,
                q,
            })
        })
        .collect()
}

pub fn decisions_csv(decisions: &[DecisionRecord]) -> String {
    let mut out = String::from("time,expert,duration,dwell,conf_bumpy,conf_stairs,conf_stepped\n");
    for d in decisions {
        let c = d.decision.confidences;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            d.time,
            ExpertRegistry::name(d.decision.selected_expert),
            d.decision.duration,
            d.dwell,
            c[0],
            c[1],
            c[2]
        ));
    }
    out
}

/// Columns: time, commanded velocity, measured velocity.
pub fn velocity_data(trajectory: &[TrajectoryPoint]) -> String {
    let mut out = String::from("# time commanded_velocity measured_velocity\n");
    for p in trajectory {
        out.push_str(&format!("{} {} {}\n", p.time, p.command, p.velocity));
    }
    out
}

/// Columns: time, target angle, measured angle of `joint`.
pub fn joint_data(trajectory: &[TrajectoryPoint], joint: usize) -> String {
    let mut out = format!("# time target_angle_{joint} measured_angle_{joint}\n");
    for p in trajectory {
        out.push_str(&format!("{} {} {}\n", p.time, p.targets[joint], p.q[joint]));
    }
    out
}

/// Iteration, mean reward, velocity error and curriculum row from a
/// training metrics CSV.
pub fn learning_curve_data(metrics: &str) -> Result<String> {
    let mut lines = metrics.lines();
    if !lines.next().is_some_and(|h| h.starts_with(METRICS_HEADER)) {
        return Err(Error::Config("not a training metrics file: header mismatch".into()));
    }
    let mut out = String::from("# iter mean_reward vel_err mean_row\n");
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() < 4 {
            return Err(Error::Config(format!("short metrics row `{line}`")));
        }
        out.push_str(&cells[..4].join(" "));
        out.push('\n');
    }
    Ok(out)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Turn a training metrics CSV or a mission trajectory log into plot data in
/// `dir`. The input kind is recognised by its header.
pub fn emit_plots(input: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if text.starts_with(METRICS_HEADER) {
        return Ok(vec![write(dir, LEARNING_CURVE_FILE, &learning_curve_data(&text)?)?]);
    }
    let trajectory = parse_trajectory(&text)
        .map_err(|_| Error::Config(format!("{}: neither a metrics CSV nor a trajectory log", input.display())))?;
    Ok(vec![
        write(dir, VELOCITY_FILE, &velocity_data(&trajectory))?,
        write(dir, JOINT_FILE, &joint_data(&trajectory, PLOT_JOINT))?,
    ])
}
