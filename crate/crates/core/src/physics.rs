//! Sagittal-plane quadruped.
//!
//! A rigid base with four two-link legs (hip pitch + knee), PD joint
//! control and spring-damper contact with regularized Coulomb friction.
//!
//! Model simplifications:
//!
//! * Legs are massless as far as the base is concerned. The base receives
//!   gravity, every foot contact force applied at the foot point, and the
//!   reaction of hip torques on legs that are in the air.
//! * Each joint accelerates as `qddot = (tau + J^T F) / I_leg` with a fixed
//!   effective inertia `I_leg`, where `F` is the contact force on its foot.
//! * Contact damping, friction and the linearized contact spring are
//!   integrated implicitly over the base and all joints together, so the
//!   light legs and the base pitch stay stable at the 5 ms step.
//!
//! Hinge conventions: hip angle 0 points the thigh straight down and positive
//! swings it forward; knee angle 0 is a straight leg and the shank direction is
//! `hip + knee` measured the same way. Pitch is positive nose-up.

use crate::error::{Error, Result};
use crate::terrain::HeightField;

pub const NUM_LEGS: usize = 4;
pub const NUM_JOINTS: usize = 2 * NUM_LEGS;

/// Base tilt beyond which the robot counts as fallen.
pub const FALL_PITCH: f64 = 1.2;

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub base_mass: f64,
    /// Pitch-axis inertia of the base, kg m^2.
    pub base_inertia: f64,
    /// Hips sit at `+-base_half_length` along the body x axis.
    pub base_half_length: f64,
    pub base_half_height: f64,
    pub thigh_length: f64,
    pub shank_length: f64,
    /// Thigh and shank masses. Informational: legs are massless for the base.
    pub leg_link_masses: [f64; 2],
    /// Effective inertia of every joint.
    pub leg_inertia: f64,
    pub joint_torque_limit: f64,
    pub hip_limits: (f64, f64),
    pub knee_limits: (f64, f64),
    pub kp: f64,
    pub kd: f64,
    pub foot_friction_coeff: f64,
    pub gravity: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    /// Slope of the regularized friction law below the Coulomb cap, N s/m.
    pub friction_damping: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            base_mass: 25.0,
            base_inertia: 1.0,
            base_half_length: 0.35,
            base_half_height: 0.05,
            thigh_length: 0.30,
            shank_length: 0.30,
            leg_link_masses: [2.0, 0.8],
            leg_inertia: 0.05,
            joint_torque_limit: 40.0,
            hip_limits: (-1.2, 1.2),
            knee_limits: (-0.1, 2.4),
            kp: 300.0,
            kd: 5.0,
            foot_friction_coeff: 0.8,
            gravity: 9.81,
            contact_stiffness: 8000.0,
            contact_damping: 300.0,
            friction_damping: 2000.0,
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("base_mass", self.base_mass),
            ("base_inertia", self.base_inertia),
            ("base_half_length", self.base_half_length),
            ("base_half_height", self.base_half_height),
            ("thigh_length", self.thigh_length),
            ("shank_length", self.shank_length),
            ("leg_inertia", self.leg_inertia),
            ("joint_torque_limit", self.joint_torque_limit),
            ("kp", self.kp),
            ("kd", self.kd),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("robot {name} must be positive, got {v}")));
            }
        }
        if self.hip_limits.0 >= self.hip_limits.1 || self.knee_limits.0 >= self.knee_limits.1 {
            return Err(Error::Config("joint limits must be non-empty intervals".into()));
        }
        Ok(())
    }

    pub fn joint_limits(&self, joint: usize) -> (f64, f64) {
        if joint.is_multiple_of(2) {
            self.hip_limits
        } else {
            self.knee_limits
        }
    }

    /// Body-frame x of leg `leg`'s hip. Legs 0, 1 are front, 2, 3 rear.
    pub fn hip_x(&self, leg: usize) -> f64 {
        if leg < 2 {
            self.base_half_length
        } else {
            -self.base_half_length
        }
    }

    /// Vertical distance from hip to foot for a given knee angle with the
    /// thigh vertical.
    pub fn stance_height(&self, knee: f64) -> f64 {
        self.thigh_length + self.shank_length * knee.cos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub base_pos: [f64; 2],
    pub base_pitch: f64,
    pub base_vel: [f64; 2],
    pub base_pitch_rate: f64,
    /// FL hip, FL knee, FR hip, FR knee, RL hip, RL knee, RR hip, RR knee.
    pub q: [f64; NUM_JOINTS],
    pub qdot: [f64; NUM_JOINTS],
}

impl RobotState {
    pub fn at_rest(x: f64, z: f64, q: [f64; NUM_JOINTS]) -> Self {
        Self {
            base_pos: [x, z],
            base_pitch: 0.0,
            base_vel: [0.0; 2],
            base_pitch_rate: 0.0,
            q,
            qdot: [0.0; NUM_JOINTS],
        }
    }

    fn first_non_finite(&self) -> Option<&'static str> {
        if !self.base_pos.iter().all(|v| v.is_finite()) {
            Some("base position")
        } else if !self.base_pitch.is_finite() {
            Some("base pitch")
        } else if !self.base_vel.iter().all(|v| v.is_finite()) {
            Some("base velocity")
        } else if !self.base_pitch_rate.is_finite() {
            Some("base pitch rate")
        } else if !self.q.iter().all(|v| v.is_finite()) {
            Some("joint angles")
        } else if !self.qdot.iter().all(|v| v.is_finite()) {
            Some("joint velocities")
        } else {
            None
        }
    }

    /// Kinetic plus gravitational energy, including the joint inertias.
    pub fn mechanical_energy(&self, model: &RobotModel) -> f64 {
        let [vx, vz] = self.base_vel;
        0.5 * model.base_mass * (vx * vx + vz * vz)
            + 0.5 * model.base_inertia * self.base_pitch_rate * self.base_pitch_rate
            + model.base_mass * model.gravity * self.base_pos[1]
            + 0.5 * model.leg_inertia * self.qdot.iter().map(|w| w * w).sum::<f64>()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContactReport {
    pub in_contact: [bool; NUM_LEGS],
    pub normal_force: [f64; NUM_LEGS],
    /// Tangential (friction) force along the surface tangent, signed.
    pub friction_force: [f64; NUM_LEGS],
    pub base_contact: bool,
}

impl ContactReport {
    pub fn total_normal_force(&self) -> f64 {
        self.normal_force.iter().sum()
    }
}

fn rotate(pitch: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = pitch.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Foot offset from the hip in the hip (body) frame.
pub fn leg_offset(model: &RobotModel, hip: f64, knee: f64) -> [f64; 2] {
    let a2 = hip + knee;
    [
        model.thigh_length * hip.sin() + model.shank_length * a2.sin(),
        -model.thigh_length * hip.cos() - model.shank_length * a2.cos(),
    ]
}

/// d(offset)/d(hip, knee) in the body frame, as columns.
fn leg_jacobian(model: &RobotModel, hip: f64, knee: f64) -> [[f64; 2]; 2] {
    let a2 = hip + knee;
    let knee_col = [model.shank_length * a2.cos(), model.shank_length * a2.sin()];
    [
        [model.thigh_length * hip.cos() + knee_col[0], model.thigh_length * hip.sin() + knee_col[1]],
        knee_col,
    ]
}

pub fn hip_position(state: &RobotState, model: &RobotModel, leg: usize) -> [f64; 2] {
    let r = rotate(state.base_pitch, [model.hip_x(leg), 0.0]);
    [state.base_pos[0] + r[0], state.base_pos[1] + r[1]]
}

pub fn foot_positions(state: &RobotState, model: &RobotModel) -> [[f64; 2]; NUM_LEGS] {
    std::array::from_fn(|leg| {
        let off = leg_offset(model, state.q[2 * leg], state.q[2 * leg + 1]);
        let r = rotate(state.base_pitch, [model.hip_x(leg) + off[0], off[1]]);
        [state.base_pos[0] + r[0], state.base_pos[1] + r[1]]
    })
}

/// World positions of the four corners of the base rectangle.
pub fn base_corners(state: &RobotState, model: &RobotModel) -> [[f64; 2]; 4] {
    let (l, h) = (model.base_half_length, model.base_half_height);
    [[l, h], [l, -h], [-l, -h], [-l, h]].map(|c| {
        let r = rotate(state.base_pitch, c);
        [state.base_pos[0] + r[0], state.base_pos[1] + r[1]]
    })
}

fn base_touches(state: &RobotState, terrain: &HeightField, model: &RobotModel) -> bool {
    state.base_pos[1] < terrain.height_at(state.base_pos[0])
        || base_corners(state, model)
            .iter()
            .any(|c| c[1] < terrain.height_at(c[0]))
}

pub fn check_fall(state: &RobotState, terrain: &HeightField, model: &RobotModel) -> bool {
    state.base_pitch.abs() > FALL_PITCH || base_touches(state, terrain, model)
}

/// `clamp(kp (target - q) - kd qdot, +-limit)` per joint.
pub fn pd_torque(
    q_target: &[f64; NUM_JOINTS],
    state: &RobotState,
    model: &RobotModel,
) -> [f64; NUM_JOINTS] {
    std::array::from_fn(|j| {
        let tau = model.kp * (q_target[j] - state.q[j]) - model.kd * state.qdot[j];
        tau.clamp(-model.joint_torque_limit, model.joint_torque_limit)
    })
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Generalized velocity: base vx, vz, pitch rate, then the eight joints.
const DOF: usize = 3 + NUM_JOINTS;

/// Solve `a x = b` for a symmetric positive definite `a` (Cholesky, in place).
fn solve_spd(a: &mut [[f64; DOF]; DOF], b: &mut [f64; DOF]) {
    for j in 0..DOF {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..DOF {
            let mut v = a[i][j];
            for k in 0..j {
                v -= a[i][k] * a[j][k];
            }
            a[i][j] = v / d;
        }
    }
    for i in 0..DOF {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i][k] * b[k];
        }
        b[i] = v / a[i][i];
    }
    for i in (0..DOF).rev() {
        let mut v = b[i];
        for k in i + 1..DOF {
            v -= a[k][i] * b[k];
        }
        b[i] = v / a[i][i];
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Stick,
    Slide(f64),
    Off,
}

/// One foot touching the surface.
struct Contact {
    leg: usize,
    normal: [f64; 2],
    tangent: [f64; 2],
    penetration: f64,
    /// Rows of the map from generalized velocity to foot velocity (world x, z).
    rows: [[f64; DOF]; 2],
    mode: Mode,
}

impl Contact {
    fn velocity(&self, u: &[f64; DOF]) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (out, row) in v.iter_mut().zip(&self.rows) {
            *out = row.iter().zip(u).map(|(g, x)| g * x).sum();
        }
        v
    }
}

/// Advance the robot by `dt` with semi-implicit Euler.
///
/// Contact damping, the linearized contact spring and sticking friction are
/// taken at the end-of-step velocity, which couples the base and all legs in
/// one small linear solve. Feet whose friction exceeds the Coulomb cap are
/// re-solved as sliding with a constant tangential force.
pub fn step_dynamics(
    state: &RobotState,
    torques: &[f64; NUM_JOINTS],
    terrain: &HeightField,
    model: &RobotModel,
    dt: f64,
) -> Result<(RobotState, ContactReport)> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if let Some(what) = state.first_non_finite() {
        return Err(Error::Numerical(format!("non-finite {what} before integration")));
    }
    let mut mass = [model.leg_inertia; DOF];
    mass[0] = model.base_mass;
    mass[1] = model.base_mass;
    mass[2] = model.base_inertia;
    let mut u = [0.0; DOF];
    u[0] = state.base_vel[0];
    u[1] = state.base_vel[1];
    u[2] = state.base_pitch_rate;
    u[3..].copy_from_slice(&state.qdot);

    let mut applied = [0.0; DOF];
    applied[1] = -model.base_mass * model.gravity;
    applied[3..].copy_from_slice(torques);

    let feet = foot_positions(state, model);
    let mut contacts = Vec::with_capacity(NUM_LEGS);
    for (leg, foot) in feet.iter().enumerate() {
        let (h, slope) = terrain.surface_at(foot[0]);
        let inv = 1.0 / (1.0 + slope * slope).sqrt();
        let gap = (foot[1] - h) * inv;
        if gap >= 0.0 {
            continue;
        }
        let r = [foot[0] - state.base_pos[0], foot[1] - state.base_pos[1]];
        let body_jac = leg_jacobian(model, state.q[2 * leg], state.q[2 * leg + 1]);
        let jac = [rotate(state.base_pitch, body_jac[0]), rotate(state.base_pitch, body_jac[1])];
        let mut rows = [[0.0; DOF]; 2];
        for (axis, row) in rows.iter_mut().enumerate() {
            row[axis] = 1.0;
            row[2] = if axis == 0 { -r[1] } else { r[0] };
            row[3 + 2 * leg] = jac[0][axis];
            row[4 + 2 * leg] = jac[1][axis];
        }
        contacts.push(Contact {
            leg,
            normal: [-slope * inv, inv],
            tangent: [inv, slope * inv],
            penetration: -gap,
            rows,
            mode: Mode::Stick,
        });
    }

    let damp_n = model.contact_damping + dt * model.contact_stiffness;
    let normal_force = |c: &Contact, v: [f64; 2]| {
        model.contact_stiffness * c.penetration - damp_n * dot(c.normal, v)
    };
    let mut next_u = u;
    // every pass only moves feet from Stick to Slide or to Off, so this ends
    for _ in 0..=2 * NUM_LEGS {
        let mut a = [[0.0; DOF]; DOF];
        let mut b = [0.0; DOF];
        for i in 0..DOF {
            a[i][i] = mass[i] / dt;
            b[i] = mass[i] / dt * u[i] + applied[i];
        }
        for leg in 0..NUM_LEGS {
            if !contacts.iter().any(|c| c.leg == leg && c.mode != Mode::Off) {
                b[2] -= torques[2 * leg];
            }
        }
        for c in contacts.iter().filter(|c| c.mode != Mode::Off) {
            let (damp_t, push_t) = match c.mode {
                Mode::Stick => (model.friction_damping, 0.0),
                Mode::Slide(f) => (0.0, f),
                Mode::Off => unreachable!(),
            };
            let spring = model.contact_stiffness * c.penetration;
            let f0 = [spring * c.normal[0] + push_t * c.tangent[0], spring * c.normal[1] + push_t * c.tangent[1]];
            // D = damp_n n n^T + damp_t t t^T in world coordinates
            let mut d = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    d[i][j] = damp_n * c.normal[i] * c.normal[j] + damp_t * c.tangent[i] * c.tangent[j];
                }
            }
            for p in 0..DOF {
                let gp = [c.rows[0][p], c.rows[1][p]];
                if gp == [0.0, 0.0] {
                    continue;
                }
                b[p] += dot(gp, f0);
                let dg = [dot(d[0], gp), dot(d[1], gp)];
                for q in 0..DOF {
                    let gq = [c.rows[0][q], c.rows[1][q]];
                    a[p][q] += dot(dg, gq);
                }
            }
        }
        solve_spd(&mut a, &mut b);
        next_u = b;

        let mut changed = false;
        for c in contacts.iter_mut() {
            if c.mode == Mode::Off {
                continue;
            }
            let v = c.velocity(&next_u);
            let f_n = normal_force(c, v);
            if f_n <= 0.0 {
                c.mode = Mode::Off;
                changed = true;
            } else if c.mode == Mode::Stick {
                let f_t = -model.friction_damping * dot(c.tangent, v);
                let cap = model.foot_friction_coeff * f_n;
                if f_t.abs() > cap {
                    c.mode = Mode::Slide(cap.copysign(f_t));
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut report = ContactReport::default();
    for c in &contacts {
        if c.mode == Mode::Off {
            continue;
        }
        let v = c.velocity(&next_u);
        let f_n = normal_force(c, v).max(0.0);
        let cap = model.foot_friction_coeff * f_n;
        let f_t = match c.mode {
            Mode::Stick => -model.friction_damping * dot(c.tangent, v),
            Mode::Slide(f) => f,
            Mode::Off => 0.0,
        }
        .clamp(-cap, cap);
        report.in_contact[c.leg] = f_n > 0.0;
        report.normal_force[c.leg] = f_n;
        report.friction_force[c.leg] = f_t;
    }

    let mut next = state.clone();
    for j in 0..NUM_JOINTS {
        let w = next_u[3 + j];
        let (lo, hi) = model.joint_limits(j);
        let q = state.q[j] + dt * w;
        if q < lo || q > hi {
            next.q[j] = q.clamp(lo, hi);
            next.qdot[j] = 0.0;
        } else {
            next.q[j] = q;
            next.qdot[j] = w;
        }
    }
    next.base_vel = [next_u[0], next_u[1]];
    next.base_pitch_rate = next_u[2];
    next.base_pos[0] += dt * next.base_vel[0];
    next.base_pos[1] += dt * next.base_vel[1];
    next.base_pitch += dt * next.base_pitch_rate;

    if let Some(what) = next.first_non_finite() {
        return Err(Error::Numerical(format!("integration produced non-finite {what}")));
    }
    report.base_contact = base_touches(&next, terrain, model);
    Ok((next, report))
}
