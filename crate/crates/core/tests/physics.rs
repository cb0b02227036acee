use mtac::physics::{foot_positions, pd_torque, step_dynamics, RobotModel, RobotState, NUM_JOINTS};
use mtac::terrain::HeightField;

const DT: f64 = 0.005;

fn stance() -> [f64; NUM_JOINTS] {
    [0.0, 0.4, 0.0, 0.4, 0.0, 0.4, 0.0, 0.4]
}

fn standing(model: &RobotModel) -> RobotState {
    RobotState::at_rest(5.0, model.stance_height(0.4), stance())
}

#[test]
fn resting_contact_force_balances_weight() {
    let model = RobotModel::default();
    let flat = HeightField::flat(10.0, 0.02);
    let mut state = standing(&model);
    let steps = (2.0 / DT) as usize;
    let mut total = 0.0;
    for _ in 0..steps {
        let tau = pd_torque(&stance(), &state, &model);
        let (next, report) = step_dynamics(&state, &tau, &flat, &model, DT).unwrap();
        assert!(report.normal_force.iter().all(|&f| f >= 0.0));
        assert!(!report.base_contact);
        total += report.total_normal_force();
        state = next;
    }
    let mean = total / steps as f64;
    let weight = model.base_mass * model.gravity;
    println!("mean normal {mean} weight {weight} final {:?}", state);
    assert!((mean - weight).abs() / weight < 0.02, "mean {mean} vs weight {weight}");
    let feet = foot_positions(&state, &model);
    assert!(feet.iter().all(|f| f[1] < 0.0 && f[1] > -0.02));
}

#[test]
fn torque_free_flight_conserves_energy() {
    let model = RobotModel { contact_damping: 0.0, foot_friction_coeff: 0.0, ..Default::default() };
    let flat = HeightField::flat(10.0, 0.02);
    let mut state = RobotState::at_rest(5.0, 5.0, stance());
    state.base_vel = [1.0, 2.0];
    state.base_pitch_rate = 0.5;
    let e0 = state.mechanical_energy(&model);
    for _ in 0..(1.0 / DT) as usize {
        let (next, report) = step_dynamics(&state, &[0.0; NUM_JOINTS], &flat, &model, DT).unwrap();
        assert_eq!(report.total_normal_force(), 0.0);
        state = next;
    }
    let drift = (state.mechanical_energy(&model) - e0).abs() / e0;
    assert!(drift < 0.01, "energy drift {drift}");
}
