use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use mtac::env::{
    compute_reward, update_curriculum, Command, EnvConfig, EnvSlot, EpisodeOutcome, RewardWeights, VecEnv, ACT_DIM,
    NOMINAL_STANCE,
};
use mtac::physics::{check_fall, RobotState, NUM_JOINTS};
use mtac::rng::stream_rng;
use mtac::terrain::{CurriculumGrid, TerrainFamily, GRID_ROWS};

fn grid(seed: u64) -> Arc<CurriculumGrid> {
    Arc::new(CurriculumGrid::new(TerrainFamily::Bumpy, seed).unwrap())
}

fn random_actions(n: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, ACT_DIM), |_| rng.random_range(-0.3..0.3))
}

#[test]
fn batch_and_serial_stepping_agree_exactly() {
    let config = EnvConfig { num_envs: 16, ..Default::default() };
    let mut par = VecEnv::new(&config, grid(1), 2).unwrap();
    let mut ser = VecEnv::new(&config, grid(1), 2).unwrap();
    let mut rng = stream_rng(3, 0);
    for _ in 0..150 {
        let a = random_actions(16, &mut rng);
        let x = par.batch_step(a.view()).unwrap();
        let y = ser.batch_step_serial(a.view()).unwrap();
        assert_eq!(x.obs, y.obs);
        assert_eq!(x.rewards, y.rewards);
        assert_eq!(x.dones, y.dones);
        assert_eq!(x.outcomes, y.outcomes);
    }
}

#[test]
fn batch_of_one_equals_single_slot() {
    let config = EnvConfig { num_envs: 1, ..Default::default() };
    let g = grid(4);
    let mut envs = VecEnv::new(&config, g.clone(), 5).unwrap();
    let mut slot = envs.slots()[0].clone();
    let mut rng = stream_rng(6, 0);
    for _ in 0..100 {
        let a = random_actions(1, &mut rng);
        let batch = envs.batch_step(a.view()).unwrap();
        let single = slot.step(a.row(0).as_slice().unwrap()).unwrap();
        assert_eq!(batch.rewards[0], single.reward);
        assert_eq!(batch.dones[0], single.done);
        if single.done {
            break;
        }
        assert_eq!(batch.obs.row(0).to_vec(), single.obs.to_vec());
    }
}

#[test]
fn slot_streams_are_isolated() {
    // slot 0 sees the same trajectory whether or not its neighbours exist
    let g = grid(7);
    let mut small = VecEnv::new(&EnvConfig { num_envs: 1, ..Default::default() }, g.clone(), 8).unwrap();
    let mut large = VecEnv::new(&EnvConfig { num_envs: 6, ..Default::default() }, g, 8).unwrap();
    let mut rng = stream_rng(9, 0);
    for _ in 0..300 {
        let a = random_actions(6, &mut rng);
        let s = small.batch_step(a.slice(ndarray::s![0..1, ..])).unwrap();
        let l = large.batch_step(a.view()).unwrap();
        assert_eq!(s.obs.row(0), l.obs.row(0));
        assert_eq!(s.rewards[0], l.rewards[0]);
    }
}

#[test]
fn replay_reproduces_trajectory_rewards_and_outcome() {
    let run = |log: Option<&Vec<Vec<f64>>>| {
        let config = EnvConfig::default();
        let g = grid(10);
        let mut slot = EnvSlot::new(&config, stream_rng(11, 3));
        slot.reset(&g, (2, 5));
        let mut rng = stream_rng(12, 0);
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        let mut outcome = None;
        for t in 0..config.max_steps() {
            let a: Vec<f64> = match log {
                Some(l) => l[t].clone(),
                None => (0..ACT_DIM).map(|_| rng.random_range(-0.1..0.1)).collect(),
            };
            let r = slot.step(&a).unwrap();
            actions.push(a);
            rewards.push(r.reward);
            if r.done {
                outcome = r.outcome;
                break;
            }
        }
        (actions, rewards, outcome, slot.state().clone())
    };
    let first = run(None);
    let second = run(Some(&first.0));
    assert_eq!(first.1, second.1);
    assert_eq!(first.2, second.2);
    assert_eq!(first.3, second.3);
}

#[test]
fn rewards_are_never_negative() {
    let config = EnvConfig { num_envs: 8, ..Default::default() };
    let mut envs = VecEnv::new(&config, grid(13), 14).unwrap();
    let mut rng = stream_rng(15, 0);
    for _ in 0..200 {
        let a = Array2::from_shape_fn((8, ACT_DIM), |_| rng.random_range(-3.0..3.0));
        let step = envs.batch_step(a.view()).unwrap();
        assert!(step.rewards.iter().all(|&r| r >= 0.0));
    }
}

#[test]
fn reward_examples() {
    let config = EnvConfig::default();
    let prev = RobotState::at_rest(0.0, 0.6, NOMINAL_STANCE);
    let mut next = prev.clone();
    next.base_pos[0] += 0.5 * config.policy_dt();
    let cmd = Command { target_forward_velocity: 0.5 };
    let r = compute_reward(&prev, &next, &cmd, &[0.0; NUM_JOINTS], &config);
    assert!((r - 1.2).abs() < 1e-12);

    let zero = EnvConfig {
        reward: RewardWeights { velocity: 0.0, alive: 0.0, torque: 0.0, pitch: 0.0, joint_velocity: 0.0 },
        ..Default::default()
    };
    assert_eq!(compute_reward(&prev, &next, &cmd, &[0.0; NUM_JOINTS], &zero), 0.0);
    assert_eq!(compute_reward(&prev, &next, &cmd, &[1e4; NUM_JOINTS], &config), 0.0);
}

#[test]
fn curriculum_clamps_and_rules() {
    let config = EnvConfig::default();
    let mut rng = stream_rng(16, 0);
    let outcome = |d: f64, fell: bool| EpisodeOutcome { distance_traveled: d, commanded_distance: 10.0, fell, cell: (0, 0) };
    assert_eq!(update_curriculum((9, 4), &outcome(10.0, false), &config, &mut rng), (9, 4));
    assert_eq!(update_curriculum((0, 4), &outcome(10.0, true), &config, &mut rng), (0, 4));
    assert_eq!(update_curriculum((3, 4), &outcome(9.0, false), &config, &mut rng).0, 4);
    assert_eq!(update_curriculum((3, 4), &outcome(6.0, false), &config, &mut rng), (3, 4));
    assert_eq!(update_curriculum((3, 4), &outcome(2.0, false), &config, &mut rng).0, 2);
}

#[test]
fn spawn_is_valid_and_within_jitter() {
    let config = EnvConfig::default();
    let g = grid(17);
    let mut slot = EnvSlot::new(&config, stream_rng(18, 0));
    for row in 0..GRID_ROWS {
        slot.reset(&g, (row, 6));
        assert!(!check_fall(slot.state(), slot.terrain(), slot.model()));
        assert!((slot.state().base_pos[0] - g.spawn_x(6)).abs() <= config.spawn_jitter);
    }
}
