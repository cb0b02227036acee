//! Acceptance suite. Every criterion prints one PASS/FAIL line and fails
//! its test when the line says FAIL.
//!
//! Criterion 8 trains six policies for 1500 iterations each and is ignored
//! by default:
//!
//! ```text
//! cargo test --release -p mtac --test acceptance -- --ignored --nocapture
//! ```

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use ndarray::Array2;
use rand::Rng;

use mtac::config::RunConfig;
use mtac::env::{update_curriculum, EnvConfig, EnvSlot, EpisodeOutcome, ACT_DIM, OBS_DIM};
use mtac::harness::checkpoint::{decode, encode};
use mtac::harness::eval::{EvalRecord, BASELINE_LABEL, MTAC_LABEL};
use mtac::harness::table::{compare_table, REFERENCE_TABLE, TABLE_HEADER};
use mtac::harness::{evaluate, train_baseline, EvalSpec, PolicySource, Role};
use mtac::hierarchy::{
    run_controller, run_solo, train_gate, Expert, ExpertRegistry, Gate, MixedTerrainMap, GATE_EPISODE_CAP,
};
use mtac::numerics::Mlp;
use mtac::physics::{pd_torque, step_dynamics, RobotModel, RobotState, NUM_JOINTS};
use mtac::ppo::{compute_gae, minibatch_loss, train_expert, PolicyNet, PpoHyper, RolloutBuffer};
use mtac::rng::{derive_seed, stream_rng};
use mtac::terrain::{
    generate_terrain, stair_step_height, CurriculumGrid, HeightField, TerrainFamily, TerrainKind, TerrainSpec,
    GRID_ROWS, RESOLUTION,
};

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2} [{verdict}] {name}: {detail}");
    assert!(pass, "criterion {n} failed: {detail}");
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
#[ignore = "about 2.5 h on one core"]
fn criterion_08_specialization_trend() {
    const ITERATIONS: usize = 1500;
    let config = RunConfig::default();
    let artifacts = std::env::var_os("MTAC_ARTIFACTS").map(std::path::PathBuf::from);
    let (mut expert_done, mut baseline_done, mut trials) = (0usize, 0usize, 0usize);
    for seed in 1..=3u64 {
        let tick = |label: &'static str| {
            move |log: &mtac::ppo::IterationLog, _: &mtac::ppo::PolicyNet| {
                if log.iter.is_multiple_of(100) {
                    eprintln!("{label} seed {seed} iter {} vel_err {:.3} row {:.2}", log.iter, log.rollout.vel_err, log.rollout.mean_row);
                }
                Ok(())
            }
        };
        let (expert, _) = train_expert(TerrainFamily::Stairs, ITERATIONS, &config, seed, tick("stairs")).unwrap();
        let (baseline, _) = train_baseline(ITERATIONS, &config, seed, tick("baseline")).unwrap();
        if let Some(dir) = &artifacts {
            use mtac::harness::{save_checkpoint, Role};
            std::fs::create_dir_all(dir).unwrap();
            save_checkpoint(&expert, Role::Expert(TerrainFamily::Stairs), &dir.join(format!("stairs-{seed}.ckpt"))).unwrap();
            save_checkpoint(&baseline, Role::Baseline, &dir.join(format!("baseline-{seed}.ckpt"))).unwrap();
        }
        for velocity in [0.75, 1.75] {
            let spec = EvalSpec { terrain: TerrainFamily::Stairs, difficulty: 1.0, velocity, trials: 15, seed: 1000 + seed };
            let (e, _) = evaluate(&PolicySource::Expert(expert.clone()), &spec, &config.env).unwrap();
            let (b, _) = evaluate(&PolicySource::Baseline(baseline.clone()), &spec, &config.env).unwrap();
            println!(
                "  seed {seed} v {velocity}: stairs expert {}/15 (err {:.3}), baseline {}/15 (err {:.3})",
                e.completions, e.mean_velocity_error, b.completions, b.mean_velocity_error
            );
            if velocity == 0.75 {
                expert_done += e.completions;
                baseline_done += b.completions;
                trials += spec.trials;
            }
        }
    }
    // equal trials per seed, so pooled counts give the seed-averaged rates;
    // integers keep an exact 20 pp tie from hinging on rounding
    let (e, b) = (expert_done as f64 / trials as f64, baseline_done as f64 / trials as f64);
    report(
        8,
        "specialization trend, stairs 100% at 0.75 m/s",
        100 * expert_done >= 100 * baseline_done + 20 * trials,
        &format!(
            "expert {expert_done}/{trials} ({:.1}%) vs baseline {baseline_done}/{trials} ({:.1}%), margin {:.1} pp, need >= 20",
            100.0 * e,
            100.0 * b,
            100.0 * (e - b)
        ),
    );
}

#[test]
fn criterion_01_gradient_correctness() {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = stream_rng(seed, 0);
        let mut net = Mlp::new(&[6, 16, 16, 3], 1.0, &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |n: &Mlp| -> f64 { n.forward(&x).unwrap().iter().zip(&c).map(|(y, c)| y * c).sum() };
        let grads = net.backward(&net.trace(&x).unwrap(), &c).unwrap();
        for i in 0..net.params().len() {
            let p = net.params()[i];
            net.params_mut()[i] = p + h;
            let up = loss(&net);
            net.params_mut()[i] = p - h;
            let down = loss(&net);
            net.params_mut()[i] = p;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.params[i];
            let scale = analytic.abs().max(numeric.abs());
            // both below the finite-difference noise floor: compare absolutely
            let err = if scale < 1e-6 { (analytic - numeric).abs() } else { (analytic - numeric).abs() / scale };
            worst = worst.max(err);
        }
    }
    report(1, "gradient correctness", worst < 1e-4, &format!("max relative error {worst:.2e} over 10 nets"));
}

/// Direct sum over the remaining steps of each trajectory segment.
fn brute_force_gae(r: &[f64], v: &[f64], done: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let next_value = |t: usize| if t + 1 < n { v[t + 1] } else { bootstrap };
    let delta = |t: usize| r[t] + if done[t] { 0.0 } else { gamma * next_value(t) } - v[t];
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for k in t..n {
                sum += (gamma * lambda).powi((k - t) as i32) * delta(k);
                if done[k] {
                    break;
                }
            }
            sum
        })
        .collect()
}

#[test]
fn criterion_02_gae_oracle() {
    let mut rng = stream_rng(2, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=20);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        let boot = rng.random_range(-2.0..2.0);
        let (gamma, lambda) = (rng.random_range(0.8..1.0), rng.random_range(0.5..1.0));
        let fast = compute_gae(&r, &v, &d, boot, gamma, lambda);
        let slow = brute_force_gae(&r, &v, &d, boot, gamma, lambda);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    report(2, "GAE oracle", worst <= 1e-10, &format!("max abs difference {worst:.2e} over 100 trajectories"));
}

#[test]
fn criterion_03_ppo_ratio_identity() {
    let mut rng = stream_rng(3, 0);
    let policy = PolicyNet::expert(-0.5, &mut rng).unwrap();
    let (horizon, envs) = (6, 8);
    let mut buf = RolloutBuffer::new(horizon, envs, OBS_DIM, ACT_DIM);
    buf.obs = Array2::from_shape_fn((horizon * envs, OBS_DIM), |_| rng.random_range(-1.0..1.0));
    for i in 0..buf.len() {
        let mean = policy.mean_action(buf.obs.row(i).as_slice().unwrap()).unwrap();
        let (a, lp) = policy.head.sample(&mean, &mut rng);
        buf.actions.row_mut(i).assign(&ndarray::ArrayView1::from(&a));
        buf.log_probs[i] = lp;
        buf.rewards[i] = rng.random_range(-1.0..1.0);
        buf.values[i] = rng.random_range(-1.0..1.0);
        buf.dones[i] = rng.random_bool(0.1);
    }
    buf.compute_gae(0.99, 0.95);
    let idx: Vec<usize> = (0..buf.len()).collect();
    let eval = minibatch_loss(&policy, &buf, &idx, &PpoHyper::default()).unwrap();
    let ratio_dev = eval.ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    let pass = ratio_dev <= 1e-12 && eval.stats.clip_frac == 0.0 && eval.stats.approx_kl < 1e-10;
    report(
        3,
        "PPO ratio identity",
        pass,
        &format!("max |ratio - 1| {ratio_dev:.1e}, clip fraction {}, approx KL {:.1e}", eval.stats.clip_frac, eval.stats.approx_kl),
    );
}

fn replay_episode(seed: u64, actions: Option<&[Vec<f64>]>) -> (Vec<Vec<f64>>, Vec<RobotState>) {
    let config = EnvConfig { episode_length: 20.0, ..Default::default() };
    let grid = CurriculumGrid::new(TerrainFamily::Bumpy, seed).unwrap();
    let mut slot = EnvSlot::new(&config, stream_rng(seed, 7));
    slot.reset(&grid, (1, 4));
    let mut action_rng = stream_rng(seed, 8);
    let mut log = Vec::new();
    let mut states = Vec::new();
    for t in 0..config.max_steps() {
        let a = match actions {
            Some(a) => a[t].clone(),
            None => (0..ACT_DIM).map(|_| action_rng.random_range(-0.05..0.05)).collect(),
        };
        let r = slot.step(&a).unwrap();
        log.push(a);
        states.push(slot.state().clone());
        if r.done {
            break;
        }
    }
    (log, states)
}

#[test]
fn criterion_04_physics_determinism_and_sanity() {
    let (actions, first) = replay_episode(4, None);
    let (_, second) = replay_episode(4, Some(&actions));
    let full_episode = first.len() == 1000;
    let bitwise = first.len() == second.len()
        && first.iter().zip(&second).all(|(a, b)| {
            let bits = |s: &RobotState| -> Vec<u64> {
                s.base_pos
                    .iter()
                    .chain(&s.base_vel)
                    .chain(&s.q)
                    .chain(&s.qdot)
                    .chain([&s.base_pitch, &s.base_pitch_rate])
                    .map(|v| v.to_bits())
                    .collect()
            };
            bits(a) == bits(b)
        });

    let dt = 0.005;
    let model = RobotModel::default();
    let flat = HeightField::flat(10.0, RESOLUTION);
    let stance = mtac::env::NOMINAL_STANCE;
    let mut state = RobotState::at_rest(5.0, model.stance_height(stance[1]), stance);
    let steps = (2.0 / dt) as usize;
    let mut total = 0.0;
    for _ in 0..steps {
        let tau = pd_torque(&stance, &state, &model);
        let (next, contact) = step_dynamics(&state, &tau, &flat, &model, dt).unwrap();
        total += contact.total_normal_force();
        state = next;
    }
    let weight = model.base_mass * model.gravity;
    let force_err = (total / steps as f64 - weight).abs() / weight;

    let frictionless = RobotModel { contact_damping: 0.0, foot_friction_coeff: 0.0, ..Default::default() };
    let mut flight = RobotState::at_rest(5.0, 5.0, stance);
    flight.base_vel = [1.0, 2.0];
    flight.base_pitch_rate = 0.5;
    let e0 = flight.mechanical_energy(&frictionless);
    for _ in 0..(1.0 / dt) as usize {
        flight = step_dynamics(&flight, &[0.0; NUM_JOINTS], &flat, &frictionless, dt).unwrap().0;
    }
    let drift = (flight.mechanical_energy(&frictionless) - e0).abs() / e0;

    report(
        4,
        "physics determinism and sanity",
        full_episode && bitwise && force_err < 0.02 && drift < 0.01,
        &format!(
            "replay of {} steps bitwise {bitwise}, resting normal force error {:.3}%, flight energy drift {:.4}%",
            first.len(),
            100.0 * force_err,
            100.0 * drift
        ),
    );
}

#[test]
fn criterion_05_terrain_properties() {
    let kinds = [TerrainKind::Flat, TerrainKind::Bumpy, TerrainKind::StairPyramid, TerrainKind::StairPit, TerrainKind::Stepped];
    let mut zero_flat = true;
    let mut deterministic = true;
    let mut symmetric = true;
    for seed in 0..5 {
        for kind in kinds {
            let zero = generate_terrain(&TerrainSpec::new(kind, 0.0, seed)).unwrap();
            // stair steps start at 5 cm and stepped blocks at 2 cm, so only
            // amplitude-scaled kinds vanish at difficulty 0
            if matches!(kind, TerrainKind::Flat | TerrainKind::Bumpy) {
                zero_flat &= zero.heights().iter().all(|&h| h == 0.0);
            }
            let spec = TerrainSpec::new(kind, 0.3 + 0.1 * seed as f64, seed);
            deterministic &= generate_terrain(&spec).unwrap() == generate_terrain(&spec).unwrap();
        }
        let pyramid = generate_terrain(&TerrainSpec::new(TerrainKind::StairPyramid, 0.2 * seed as f64, seed)).unwrap();
        let h = pyramid.heights();
        let n = h.len();
        // mirror of sample k may land one cell off the exact reflection
        symmetric &= (0..n).all(|k| {
            let m = n - 1 - k;
            [m.saturating_sub(1), m, (m + 1).min(n - 1)].iter().any(|&j| h[j] == h[k])
        });
    }
    let steps: Vec<f64> = (0..=10).map(|i| stair_step_height(i as f64 / 10.0)).collect();
    let increasing = steps.windows(2).all(|w| w[1] > w[0]);
    report(
        5,
        "terrain properties",
        zero_flat && symmetric && increasing && deterministic,
        &format!("zero-difficulty flat and bumpy fields all zero {zero_flat}, pyramid symmetric {symmetric}, step height increasing {increasing}, deterministic {deterministic}"),
    );
}

#[test]
fn criterion_06_curriculum_dynamics() {
    let config = EnvConfig::default();
    let grid = CurriculumGrid::new(TerrainFamily::Stairs, 6).unwrap();
    let mut slot = EnvSlot::new(&config, stream_rng(6, 0));
    let mut rng = stream_rng(6, 1);
    let crippled = Expert::crippled();

    let mut cell = (8, 3);
    let mut falling_episodes = 0;
    while cell.0 > 0 && falling_episodes < 20 {
        let mut obs = slot.reset(&grid, cell);
        let outcome = loop {
            let action = crippled.act(&obs, slot.rng_mut()).unwrap();
            let r = slot.step(&action).unwrap();
            obs = r.obs;
            if let Some(o) = r.outcome {
                break o;
            }
        };
        assert!(outcome.fell);
        cell = update_curriculum(cell, &outcome, &config, &mut rng);
        falling_episodes += 1;
    }

    let mut cell = (0, 3);
    let mut succeeding_episodes = 0;
    while cell.0 < GRID_ROWS - 1 && succeeding_episodes < 20 {
        let outcome = EpisodeOutcome { distance_traveled: 20.0, commanded_distance: 20.0, fell: false, cell };
        cell = update_curriculum(cell, &outcome, &config, &mut rng);
        succeeding_episodes += 1;
    }
    report(
        6,
        "curriculum dynamics",
        falling_episodes <= 9 && succeeding_episodes <= 9,
        &format!("falling stub 8 -> 0 in {falling_episodes} episodes, succeeding stub 0 -> 9 in {succeeding_episodes}"),
    );
}

/// The flat-terrain policy of criterion 7, trained once and shared with
/// criterion 9.
fn flat_policy() -> &'static PolicyNet {
    static POLICY: OnceLock<PolicyNet> = OnceLock::new();
    POLICY.get_or_init(|| {
        let config = RunConfig::default();
        assert_eq!(config.env.num_envs, 256);
        let (policy, logs) = train_expert(TerrainFamily::Flat, 300, &config, 7, |log, _| {
            if log.iter % 50 == 0 {
                eprintln!("flat iter {} vel_err {:.3}", log.iter, log.rollout.vel_err);
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(logs.len(), 300);
        policy
    })
}

#[test]
fn criterion_07_learning_smoke_test() {
    let policy = flat_policy();
    let spec = EvalSpec { terrain: TerrainFamily::Flat, difficulty: 0.5, velocity: 0.75, trials: 5, seed: 70 };
    let (record, _) = evaluate(&PolicySource::Expert(policy.clone()), &spec, &EnvConfig::default()).unwrap();

    // the same strip driven by the mean action alone, for comparison
    let strip = std::sync::Arc::new(mtac::terrain::eval_strip(TerrainFamily::Flat, 0.5, derive_seed(70, 0)).unwrap());
    let mut slot = EnvSlot::new(&EnvConfig::default().nominal(), stream_rng(70, 1));
    let mut obs = slot.reset_at(strip, 1.0, Some(0.75));
    let mut errs = Vec::new();
    for _ in 0..1000 {
        let r = slot.step(&policy.mean_action(&obs).unwrap()).unwrap();
        errs.push((r.velocity - 0.75).abs());
        if r.done {
            break;
        }
        obs = r.obs;
    }
    report(
        7,
        "learning smoke test",
        record.mean_velocity_error < 0.3,
        &format!(
            "mean |v - 0.75| = {:.3} m/s after 300 iterations ({}/5 strips crossed); mean action alone: {:.3} m/s",
            record.mean_velocity_error,
            record.completions,
            mean(&errs)
        ),
    );
}

#[test]
fn criterion_09_gate_avoids_crippled_expert() {
    let walker = Expert::Network(flat_policy().clone());
    let registry = ExpertRegistry::new([walker.clone(), Expert::crippled(), walker]);
    let bumpy_map = |seed: u64| {
        let mut rng = stream_rng(seed, 9);
        let parts: Vec<(TerrainFamily, f64)> = (0..5).map(|_| (TerrainFamily::Bumpy, rng.random_range(0.0..0.5))).collect();
        MixedTerrainMap::from_sections(&parts, seed)
    };
    let config = RunConfig::default();
    let gate = PolicyNet::gate(config.ppo.init_log_std, &mut stream_rng(90, 0)).unwrap();
    let before = registry.checksum();
    let (gate, history) = train_gate(gate, &registry, &bumpy_map, 200, &config, 91, |it, _| {
        if it.log.iter.is_multiple_of(25) {
            eprintln!("gate iter {} selections {:?}", it.log.iter, it.selection_counts);
        }
        Ok(())
    })
    .unwrap();
    assert_eq!(registry.checksum(), before);

    let gate = Gate::Network(gate);
    let (mut good, mut total) = (0usize, 0usize);
    let env = EnvConfig { episode_length: GATE_EPISODE_CAP, ..EnvConfig::default().nominal() };
    for m in 0..10u64 {
        let map = bumpy_map(derive_seed(900, m)).unwrap();
        let mut slot = EnvSlot::new(&env, stream_rng(901, m));
        slot.reset_at(map.field.clone(), map.spawn_x(), Some(0.75));
        let mission = run_controller(&gate, &registry, &mut slot, map.goal_x(), GATE_EPISODE_CAP).unwrap();
        total += mission.decisions.len();
        good += mission.decisions.iter().filter(|d| d.decision.selected_expert != 1).count();
    }
    let last = history.last().unwrap().selection_counts;
    let frac = good as f64 / total as f64;
    report(
        9,
        "gate avoids the crippled expert",
        frac >= 0.9,
        &format!(
            "{good}/{total} greedy decisions ({:.1}%) pick a working expert; final training iteration selections {last:?}",
            100.0 * frac
        ),
    );
}

#[test]
fn criterion_10_constant_gate_equivalence() {
    // the trained walker at three noise levels, so solo runs last the whole limit
    let experts: Vec<Expert> = [None, Some(-2.0), Some(-0.5)]
        .into_iter()
        .map(|log_std| {
            let mut p = flat_policy().clone();
            if let Some(v) = log_std {
                p.head.log_std_mut().fill(v);
            }
            Expert::Network(p)
        })
        .collect();
    let registry = ExpertRegistry::new([experts[0].clone(), experts[1].clone(), experts[2].clone()]);
    let map = MixedTerrainMap::random(10, 3).unwrap();
    let fresh = || {
        let mut slot = EnvSlot::new(&EnvConfig::default(), stream_rng(10, 1));
        slot.reset_at(map.field.clone(), map.spawn_x(), Some(0.75));
        slot
    };
    let mut identical = true;
    let mut steps = 0;
    for k in 0..3 {
        let gated = run_controller(&Gate::Fixed { expert: k, duration: 1.0 }, &registry, &mut fresh(), map.goal_x(), 12.0).unwrap();
        let solo = run_solo(registry.get(k), k, &mut fresh(), map.goal_x(), 12.0).unwrap();
        identical &= gated.states == solo.states && gated.trajectory == solo.trajectory;
        steps += solo.states.len();
    }
    report(
        10,
        "constant-gate equivalence",
        identical,
        &format!("three fixed gates against solo runs over {steps} steps: bitwise identical {identical}"),
    );
}

fn run_cli(args: &[&str], cwd: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_mtac")).args(args).current_dir(cwd).output().unwrap();
    assert!(out.status.success(), "mtac {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn cli_session(dir: &Path) -> Vec<(String, Vec<u8>)> {
    std::fs::create_dir_all(dir.join("experts")).unwrap();
    std::fs::create_dir_all(dir.join("records")).unwrap();
    std::fs::write(dir.join("small.cfg"), "num_envs = 8\nhorizon = 6\ngate_envs = 2\ngate_horizon = 3\n").unwrap();
    for t in ["bumpy", "stairs", "stepped"] {
        let out = format!("experts/{t}.ckpt");
        run_cli(&["train-expert", "--terrain", t, "--iterations", "2", "--envs", "8", "--seed", "5", "--config", "small.cfg", "--out", &out], dir);
    }
    run_cli(&["train-baseline", "--iterations", "2", "--envs", "8", "--seed", "5", "--config", "small.cfg", "--out", "baseline.ckpt"], dir);
    run_cli(&["train-gate", "--experts", "experts", "--iterations", "2", "--seed", "5", "--config", "small.cfg", "--out", "gate.ckpt"], dir);
    run_cli(&["eval", "--policy", "experts/stairs.ckpt", "--terrain", "stairs", "--difficulty", "1.0", "--velocity", "1.75", "--trials", "2", "--seed", "1", "--out", "records/expert.csv"], dir);
    run_cli(&["eval", "--policy", "baseline.ckpt", "--terrain", "stairs", "--difficulty", "1.0", "--velocity", "1.75", "--trials", "2", "--seed", "1", "--out", "records/baseline.csv"], dir);
    run_cli(&["eval", "--policy", "gate.ckpt", "--experts", "experts", "--gate", "gate.ckpt", "--terrain", "bumpy", "--difficulty", "0.5", "--velocity", "0.75", "--trials", "2", "--seed", "1", "--out", "gate-eval.csv"], dir);
    run_cli(&["run", "--gate", "gate.ckpt", "--experts", "experts", "--map-seed", "3", "--time-limit", "4", "--log", "mission.csv"], dir);
    run_cli(&["plot", "--metrics", "mission.csv", "--out", "plots"], dir);
    run_cli(&["plot", "--metrics", "baseline.ckpt.metrics.csv", "--out", "plots"], dir);
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn criterion_11_persistence_and_cli() {
    let policy = PolicyNet::expert(-1.0, &mut stream_rng(11, 0)).unwrap();
    let bytes = encode(&policy, Role::Expert(TerrainFamily::Stepped));
    let (role, back) = decode(&bytes).unwrap();
    let round_trip = role == Role::Expert(TerrainFamily::Stepped)
        && back.flat_params().iter().zip(policy.flat_params()).all(|(a, b)| a.to_bits() == b.to_bits())
        && back == policy;
    let mut corrupt = bytes.clone();
    corrupt[bytes.len() / 2] ^= 0x10;
    let rejected = matches!(decode(&corrupt), Err(mtac::Error::Checkpoint(m)) if m.contains("checksum"));

    let mut records = Vec::new();
    for &(terrain, difficulty, velocity, mtac_cr, ppo_cr) in &REFERENCE_TABLE {
        for (label, cr) in [(BASELINE_LABEL, ppo_cr), (MTAC_LABEL, mtac_cr)] {
            let spec = EvalSpec { terrain, difficulty, velocity, trials: 100, seed: 0 };
            records.push(EvalRecord {
                policy: label.to_string(),
                spec,
                completions: cr as usize,
                completion_rate: cr as f64 / 100.0,
                mean_velocity_error: 0.0,
                mean_time_to_complete: 0.0,
                non_finite_trials: 0,
            });
        }
    }
    records.reverse();
    let table = compare_table(&records).unwrap();
    let mut expected = format!("{TABLE_HEADER}\n");
    for &(terrain, difficulty, velocity, mtac_cr, ppo_cr) in &REFERENCE_TABLE {
        let t = mtac::harness::table::terrain_label(terrain);
        let d = mtac::harness::table::difficulty_label(difficulty);
        expected.push_str(&format!("MTAC,{t},{d},{velocity},{mtac_cr}%\nGeneralized PPO,{t},{d},{velocity},{ppo_cr}%\n"));
    }
    let layout = table == expected && table.lines().all(|l| l.split(',').count() == 5) && table.lines().count() == 25;

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = cli_session(a.path());
    let second = cli_session(b.path());
    let reproducible = first == second;
    let mismatched: Vec<&str> =
        first.iter().zip(&second).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();

    report(
        11,
        "persistence and CLI",
        round_trip && rejected && layout && reproducible,
        &format!(
            "round trip {round_trip}, corrupted checksum rejected {rejected}, table layout {layout}, {} CLI output files byte-identical {reproducible} {mismatched:?}",
            first.len()
        ),
    );
}

