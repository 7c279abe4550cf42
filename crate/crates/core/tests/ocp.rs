mod common;

use common::random_instance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safenav::barrier::gcbf_decay;
use safenav::dynamics::{ModelKind, ObstacleTrack, RobotState, SystemModel};
use safenav::ocp::{
    build, build_mpc_dc, build_mpc_dcbf, build_scmpc_cbf, build_scmpc_cbf_gcbf, Formulation, OcpSpec,
};
use safenav::solver::{estimate_penalty_weight, solve, NonlinearProgram, RowLabel, SolverConfig, SolverStatus};

fn rows_with(p: &dyn NonlinearProgram, z: &[f64], keep: impl Fn(&RowLabel) -> bool) -> Vec<f64> {
    let (_, c) = p.values(z);
    p.row_labels().iter().zip(c).filter(|(l, _)| keep(l)).map(|(_, v)| v).collect()
}

#[test]
fn formulations_coincide_without_obstacles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for model in common::models() {
        let (x0, _) = random_instance(&mut rng, model.kind, 0);
        let problems: Vec<_> = Formulation::ALL
            .iter()
            .map(|f| {
                let spec = OcpSpec::new(&model, *f, (0.5, 3.0));
                match f {
                    Formulation::MpcDc => build_mpc_dc(&spec, &model, &x0, &[]),
                    Formulation::MpcDcbf => build_mpc_dcbf(&spec, &model, &x0, &[]),
                    Formulation::ScmpcCbf => build_scmpc_cbf(&spec, &model, &x0, &[]),
                    Formulation::ScmpcCbfGcbf => build_scmpc_cbf_gcbf(&spec, &model, &x0, &[]),
                }
                .unwrap()
            })
            .collect();
        for _ in 0..20 {
            let z: Vec<f64> = (0..problems[0].n_vars()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let reference = problems[0].values(&z);
            for p in &problems[1..] {
                assert_eq!(p.n_vars(), z.len());
                assert_eq!(p.values(&z), reference);
            }
        }
        let solutions: Vec<Vec<f64>> = problems
            .iter()
            .map(|p| {
                let r = solve(p, &SolverConfig::default());
                assert_eq!(r.status, SolverStatus::Solved);
                r.solution
            })
            .collect();
        for s in &solutions[1..] {
            assert_eq!(s, &solutions[0]);
        }
        // The plan makes progress toward the goal.
        let states = problems[0].predicted_states(&solutions[0]);
        let n = model.state_dim();
        let last = &states[states.len() - n..];
        let (sx, sy) = x0.position();
        assert!((last[0] - 0.5).hypot(last[1] - 3.0) < (sx - 0.5).hypot(sy - 3.0));
    }
}

#[test]
fn predicted_states_follow_the_dynamics() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for model in common::models() {
        let (x0, obstacles) = random_instance(&mut rng, model.kind, 2);
        let spec = OcpSpec::new(&model, Formulation::ScmpcCbf, (0.0, 4.0));
        let p = build(&spec, &model, &x0, &obstacles).unwrap();
        let r = solve(&p, &SolverConfig::default());
        let controls = p.controls(&r.solution);
        let states = p.predicted_states(&r.solution);
        let rolled = model.rollout(&x0, &controls).unwrap();
        let n = model.state_dim();
        for (k, x) in rolled.iter().enumerate() {
            assert_eq!(&states[(k + 1) * n..(k + 2) * n], x.to_vec().as_slice());
        }
    }
}

#[test]
fn unit_gamma_cbf_rows_are_distance_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for model in common::models() {
        for _ in 0..10 {
            let (x0, obstacles) = random_instance(&mut rng, model.kind, 3);
            let mut dc = OcpSpec::new(&model, Formulation::MpcDc, (0.0, 4.0));
            dc.barrier.margin = 0.0;
            dc.barrier.gamma = 1.0;
            dc.barrier.eta = 1.0;
            let dcbf = OcpSpec {
                formulation: Formulation::MpcDcbf,
                ..dc.clone()
            };
            let p_dc = build(&dc, &model, &x0, &obstacles).unwrap();
            let p_cbf = build(&dcbf, &model, &x0, &obstacles).unwrap();
            let z: Vec<f64> = (0..p_dc.n_vars()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = rows_with(&p_dc, &z, |l| matches!(l, RowLabel::Distance { .. }));
            let b = rows_with(&p_cbf, &z, |l| matches!(l, RowLabel::Dcbf { .. }));
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}

fn fixture_state() -> RobotState {
    RobotState::DoubleIntegrator { x: 0.0, y: 0.0, vx: 1.0, vy: 0.0 }
}

#[test]
fn dcbf_fixture_is_infeasible() {
    // h_0 = 1.0 − 0.6 = 0.4. Position x_1 = 0.2 does not depend on u_0, so
    // h_1 = 0.2 < (1 − γ) h_0 = 0.36 for every input.
    let model = SystemModel::double_integrator(0.2);
    let obstacle = [ObstacleTrack::new(1.0, 0.0, 0.0, 0.0, 0.3)];
    for horizon in [2, 8] {
        let mut spec = OcpSpec::new(&model, Formulation::MpcDcbf, (4.0, 0.0));
        spec.horizon = horizon;
        let p = build(&spec, &model, &fixture_state(), &obstacle).unwrap();
        let r = solve(&p, &SolverConfig::default());
        assert_eq!(r.status, SolverStatus::Infeasible, "horizon {horizon}");
    }
}

#[test]
fn generalized_row_is_feasible_where_per_step_rows_are_not() {
    // h_0 = 0.7 and h_1 = 0.5 < 0.9 · 0.7 for every input. Braking keeps
    // x_2 ≥ 0.34, so h_2 ≤ 0.36 while (1 − η)² h_0 = 0.343: the generalized
    // row at d = 2 admits the braking plans.
    let model = SystemModel::double_integrator(0.2);
    let obstacle = [ObstacleTrack::new(1.3, 0.0, 0.0, 0.0, 0.3)];
    let mut spec = OcpSpec::new(&model, Formulation::MpcDcbf, (4.0, 0.0));
    let hard = solve(&build(&spec, &model, &fixture_state(), &obstacle).unwrap(), &SolverConfig::default());
    assert_eq!(hard.status, SolverStatus::Infeasible);

    spec.formulation = Formulation::ScmpcCbfGcbf;
    spec.penalty_weight = 100.0;
    let p = build(&spec, &model, &fixture_state(), &obstacle).unwrap();
    let r = solve(&p, &SolverConfig::default());
    assert_eq!(r.status, SolverStatus::Solved);
    let h = p.barrier_values(&r.solution);
    assert!(h[2] >= gcbf_decay(spec.barrier.eta, 2) * h[0] - 1e-6);
    assert!(p.slacks(&r.solution).max() > 0.0);
}

fn grid_points(lo: f64, hi: f64) -> [f64; 5] {
    let step = (hi - lo) / 4.0;
    [lo, lo + step, lo + 2.0 * step, lo + 3.0 * step, hi]
}

/// Best cost over the 5-level grid of every input axis, among feasible plans.
fn grid_optimum(p: &dyn NonlinearProgram, model: &SystemModel, horizon: usize) -> f64 {
    let axes: Vec<[f64; 5]> = model.input_bounds.iter().map(|b| grid_points(b.lo, b.hi)).collect();
    let dims = horizon * model.input_dim();
    let mut best = f64::INFINITY;
    let mut z = vec![0.0; dims];
    for code in 0..5usize.pow(dims as u32) {
        let mut c = code;
        for (j, v) in z.iter_mut().enumerate() {
            *v = axes[j % model.input_dim()][c % 5];
            c /= 5;
        }
        let (cost, rows) = p.values(&z);
        if rows.iter().all(|r| *r >= 0.0) {
            best = best.min(cost);
        }
    }
    best
}

#[test]
fn solver_beats_the_input_grid_at_short_horizon() {
    let cases = [
        (RobotState::DoubleIntegrator { x: 0.0, y: -1.0, vx: 0.0, vy: 0.3 }, ObstacleTrack::new(0.4, 0.6, 0.0, 0.0, 0.3)),
        (RobotState::Unicycle { x: 0.0, y: -1.0, theta: 1.5 }, ObstacleTrack::new(0.3, -0.1, 0.0, 0.0, 0.3)),
    ];
    for (x0, obstacle) in cases {
        let model = SystemModel::for_kind(x0.kind(), 0.2);
        for formulation in [Formulation::MpcDc, Formulation::MpcDcbf] {
            let mut spec = OcpSpec::new(&model, formulation, (0.0, 1.0));
            spec.horizon = 3;
            let p = build(&spec, &model, &x0, &[obstacle]).unwrap();
            let best = grid_optimum(&p, &model, 3);
            assert!(best.is_finite(), "{:?} {formulation:?}", x0.kind());
            let r = solve(&p, &SolverConfig::default());
            assert_eq!(r.status, SolverStatus::Solved);
            let (cost, rows) = p.values(&r.solution);
            assert!(rows.iter().all(|v| *v >= -1e-6));
            assert!(cost <= best + 1e-9, "{:?} {formulation:?}: {cost} vs grid {best}", x0.kind());
        }
    }
}

#[test]
fn exact_penalty_recovers_the_hard_solution() {
    let model = SystemModel::double_integrator(0.2);
    let instances: Vec<_> = (0..30)
        .map(|s| random_instance(&mut ChaCha8Rng::seed_from_u64(100 + s), ModelKind::DoubleIntegrator, 5))
        .collect();
    let hard_spec = OcpSpec::new(&model, Formulation::MpcDcbf, (0.0, 4.0));
    let config = SolverConfig::default();
    let estimate =
        estimate_penalty_weight(&hard_spec, &model, |i| instances[i].clone(), instances.len(), 2.0, &config).unwrap();
    let soft_spec = OcpSpec {
        formulation: Formulation::ScmpcCbf,
        penalty_weight: estimate.alpha,
        ..hard_spec.clone()
    };
    let mut compared = 0;
    for (x0, obstacles) in &instances {
        let hard = solve(&build(&hard_spec, &model, x0, obstacles).unwrap(), &config);
        if hard.status != SolverStatus::Solved {
            continue;
        }
        let p = build(&soft_spec, &model, x0, obstacles).unwrap();
        let soft = solve(&p, &config);
        assert_eq!(soft.status, SolverStatus::Solved);
        let gap = (0..2).map(|j| (soft.solution[j] - hard.solution[j]).abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-3, "first-control gap {gap}");
        assert!(p.slacks(&soft.solution).max() <= 1e-6);
        compared += 1;
    }
    assert!(compared >= 10);
}

#[test]
fn crowded_samples_separate_the_two_formulations() {
    let model = SystemModel::double_integrator(0.2);
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut separated = 0;
    for _ in 0..100 {
        let x0 = RobotState::DoubleIntegrator {
            x: 0.0,
            y: 0.0,
            vx: rng.gen_range(-0.2..0.2),
            vy: rng.gen_range(0.6..1.0),
        };
        let obstacles: Vec<ObstacleTrack> = (0..3)
            .map(|_| {
                let angle: f64 = rng.gen_range(0.5..2.6);
                let dist = rng.gen_range(0.7..2.5);
                ObstacleTrack::new(dist * angle.cos(), dist * angle.sin(), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 0.3)
            })
            .collect();
        let mut spec = OcpSpec::new(&model, Formulation::MpcDcbf, (0.0, 4.0));
        let hard = solve(&build(&spec, &model, &x0, &obstacles).unwrap(), &config);
        spec.formulation = Formulation::ScmpcCbfGcbf;
        spec.penalty_weight = 100.0;
        let ours = solve(&build(&spec, &model, &x0, &obstacles).unwrap(), &config);
        if hard.status == SolverStatus::Infeasible && ours.status == SolverStatus::Solved {
            separated += 1;
        }
        // A feasible per-step problem never makes the generalized one infeasible.
        if hard.status == SolverStatus::Solved {
            assert_eq!(ours.status, SolverStatus::Solved);
        }
    }
    assert!(separated >= 20, "{separated} separating samples");
}
