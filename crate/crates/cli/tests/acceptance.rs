//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safenav::barrier::{dcbf_residual, gcbf_residual, h_value};
use safenav::bench::{run_benchmark_with, BenchmarkSummary, RunConfig};
use safenav::dynamics::{predict_obstacle, Control, ModelKind, ObstacleTrack, RobotState, SystemModel};
use safenav::ocp::{build, Formulation, OcpSpec};
use safenav::orca::OrcaAgentParams;
use safenav::sim::{
    generate_scenario, min_clearance, pedestrian_velocities, run_episode, ControllerConfig, ControllerKind,
    EpisodeConfig, EpisodeLog, PedestrianSpec, PedestrianState, Scenario, ScenarioParams, Timing,
};
use safenav::solver::qp::{solve_qp, QpProblem};
use safenav::solver::{estimate_penalty_weight, kkt_check, solve, SolverConfig, SolverStatus};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Robot below the origin heading roughly toward `(0, 4)` with pedestrians
/// around it that do not overlap the robot.
fn random_instance<R: Rng>(rng: &mut R, kind: ModelKind, n_obstacles: usize) -> (RobotState, Vec<ObstacleTrack>) {
    let x0 = match kind {
        ModelKind::DoubleIntegrator => RobotState::DoubleIntegrator {
            x: rng.gen_range(-1.0..1.0),
            y: rng.gen_range(-3.0..0.0),
            vx: rng.gen_range(-0.5..0.5),
            vy: rng.gen_range(0.0..1.0),
        },
        ModelKind::Unicycle => RobotState::Unicycle {
            x: rng.gen_range(-1.0..1.0),
            y: rng.gen_range(-3.0..0.0),
            theta: rng.gen_range(1.0..2.0),
        },
    };
    let (px, py) = x0.position();
    let mut obstacles = Vec::with_capacity(n_obstacles);
    while obstacles.len() < n_obstacles {
        let (ox, oy) = (px + rng.gen_range(-4.0..4.0), py + rng.gen_range(-4.0..4.0));
        if (ox - px).hypot(oy - py) >= 0.9 {
            obstacles.push(ObstacleTrack::new(ox, oy, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.3));
        }
    }
    (x0, obstacles)
}

fn exact_penalty() -> Outcome {
    let model = SystemModel::double_integrator(0.2);
    let config = SolverConfig::default();
    let hard_spec = OcpSpec::new(&model, Formulation::MpcDcbf, (0.0, 4.0));
    let mut instances = Vec::new();
    let mut hard = Vec::new();
    let mut seed = 1000;
    while hard.len() < 50 && seed < 1400 {
        let instance = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), ModelKind::DoubleIntegrator, 5);
        let r = solve(&build(&hard_spec, &model, &instance.0, &instance.1).unwrap(), &config);
        if r.status == SolverStatus::Solved {
            hard.push((instances.len(), r));
        }
        instances.push(instance);
        seed += 1;
    }
    ensure(hard.len() >= 50, || format!("only {} hard-solved instances", hard.len()))?;
    let estimate =
        estimate_penalty_weight(&hard_spec, &model, |i| instances[i].clone(), instances.len(), 2.0, &config)
            .map_err(|e| e.to_string())?;
    let soft_spec = OcpSpec {
        formulation: Formulation::ScmpcCbf,
        penalty_weight: estimate.alpha,
        ..hard_spec.clone()
    };
    let (mut worst_gap, mut worst_slack) = (0.0f64, 0.0f64);
    for (i, h) in &hard {
        let (x0, obstacles) = &instances[*i];
        let p = build(&soft_spec, &model, x0, obstacles).unwrap();
        let soft = solve(&p, &config);
        ensure(soft.status == SolverStatus::Solved, || format!("instance {i}: soft {:?}", soft.status))?;
        worst_gap = (0..2).map(|j| (soft.solution[j] - h.solution[j]).abs()).fold(worst_gap, f64::max);
        worst_slack = worst_slack.max(p.slacks(&soft.solution).max());
    }
    let detail = format!(
        "{} instances, alpha {:.1}, max first-control gap {worst_gap:.1e}, max slack {worst_slack:.1e}",
        hard.len(),
        estimate.alpha
    );
    ensure(worst_gap <= 1e-3 && worst_slack <= 1e-6, || detail.clone())?;
    Ok(detail)
}

fn cell<'a>(s: &'a [BenchmarkSummary], c: ControllerKind, gamma: Option<f64>) -> &'a BenchmarkSummary {
    s.iter()
        .find(|x| x.controller == c && (x.gamma.is_none() || x.gamma == gamma))
        .unwrap_or_else(|| panic!("missing cell {c:?} {gamma:?}"))
}

fn fs(s: &BenchmarkSummary) -> f64 {
    s.failures_per_episode.expect("optimizing controller")
}

fn elastic_totality(benches: &[(ModelKind, Vec<BenchmarkSummary>, Vec<EpisodeLog>)]) -> Outcome {
    let mut parts = Vec::new();
    for (model, summaries, _) in benches {
        for s in summaries.iter().filter(|s| s.controller == ControllerKind::ScmpcCbf) {
            ensure(s.n_episodes == 100, || format!("{} episodes", s.n_episodes))?;
            ensure(fs(s) == 0.0, || format!("{model:?} gamma {:?}: FS {}", s.gamma, fs(s)))?;
        }
        parts.push(format!("{}: FS 0 in every gamma cell", model.key()));
    }
    Ok(parts.join("; "))
}

fn feasibility_gap(benches: &[(ModelKind, Vec<BenchmarkSummary>, Vec<EpisodeLog>)]) -> Outcome {
    let mut parts = Vec::new();
    for (model, s, _) in benches {
        let mut row = Vec::new();
        for g in [0.08, 0.10, 0.12] {
            let (hard, ours) = (fs(cell(s, ControllerKind::MpcDcbf, Some(g))), fs(cell(s, ControllerKind::Ours, Some(g))));
            row.push(format!("{g}: {hard:.2} vs {ours:.2}"));
            ensure(hard > ours && ours < 2.0, || format!("{model:?} gamma {g}: FS D-CBF {hard} Ours {ours}"))?;
        }
        parts.push(format!("{} [{}]", model.key(), row.join(", ")));
    }
    Ok(parts.join("; "))
}

fn safety_ordering(benches: &[(ModelKind, Vec<BenchmarkSummary>, Vec<EpisodeLog>)]) -> Outcome {
    const SLACK: f64 = 0.03;
    let mut parts = Vec::new();
    for (model, s, _) in benches {
        let at = |c| cell(s, c, Some(0.08)).success_rate;
        let (ours, soft, hard, dc) = (
            at(ControllerKind::Ours),
            at(ControllerKind::ScmpcCbf),
            at(ControllerKind::MpcDcbf),
            at(ControllerKind::MpcDc),
        );
        ensure(
            ours - soft >= -SLACK && soft - hard >= -SLACK && hard - dc > -SLACK,
            || format!("{model:?} at 0.08: S {ours} / {soft} / {hard} / {dc}"),
        )?;
        for c in [ControllerKind::Ours, ControllerKind::ScmpcCbf, ControllerKind::MpcDcbf] {
            let series: Vec<f64> = [0.08, 0.10, 0.12].iter().map(|g| cell(s, c, Some(*g)).success_rate).collect();
            ensure(series.windows(2).all(|w| w[1] <= w[0] + SLACK), || {
                format!("{model:?} {c:?}: S over gamma {series:?}")
            })?;
        }
        parts.push(format!("{} S at 0.08: {ours:.2} >= {soft:.2} >= {hard:.2} > {dc:.2}", model.key()));
    }
    Ok(parts.join("; "))
}

fn h_at(x: &RobotState, o: &ObstacleTrack, k: usize) -> f64 {
    let p = predict_obstacle(o, k, 0.2);
    h_value(x.position(), (p.px, p.py), 0.6)
}

fn random_start<R: Rng>(model: &SystemModel, rng: &mut R) -> RobotState {
    let v: Vec<f64> = match model.kind {
        ModelKind::DoubleIntegrator => {
            vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
        }
        ModelKind::Unicycle => vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-3.1..3.1)],
    };
    RobotState::from_slice(model.kind, &v).unwrap()
}

/// Random controls filtered by the hard CBF condition; ends early when no
/// sampled control satisfies it.
fn cbf_sequence<R: Rng>(model: &SystemModel, x0: RobotState, o: &ObstacleTrack, gamma: f64, steps: usize, rng: &mut R) -> Vec<f64> {
    let mut x = x0;
    let mut h = vec![h_at(&x, o, 0)];
    for k in 0..steps {
        let next = (0..64).find_map(|_| {
            let u: Vec<f64> = model.input_bounds.iter().map(|b| rng.gen_range(b.lo..=b.hi)).collect();
            let cand = model.step(&x, &Control::from_slice(model.kind, &u)).unwrap();
            let hn = h_at(&cand, o, k + 1);
            (dcbf_residual(hn, h[k], gamma) >= 0.0).then_some((cand, hn))
        });
        let Some((xn, hn)) = next else { break };
        x = xn;
        h.push(hn);
    }
    h
}

fn forward_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut sequences = 0;
    for model in [SystemModel::double_integrator(0.2), SystemModel::unicycle(0.2)] {
        while sequences < 600 * (1 + (model.kind == ModelKind::Unicycle) as usize) {
            let x0 = random_start(&model, &mut rng);
            let v = if rng.gen_bool(0.5) { 0.5 } else { 0.0 };
            let o = ObstacleTrack::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                v * rng.gen_range(-1.0..1.0),
                v * rng.gen_range(-1.0..1.0),
                0.3,
            );
            if h_at(&x0, &o, 0) < 0.0 {
                continue;
            }
            let h = cbf_sequence(&model, x0, &o, rng.gen_range(0.05..0.5), 30, &mut rng);
            ensure(h.iter().all(|v| *v >= 0.0), || format!("{:?}: barrier went negative {h:?}", model.kind))?;
            sequences += 1;
        }
    }
    let mut episodes = 0;
    let mut qualifying = 0;
    let mut worst = f64::INFINITY;
    for seed in 0..20 {
        let mut positions: Vec<(f64, f64)> = Vec::new();
        while positions.len() < 4 {
            let p = (rng.gen_range(-1.5..1.5), rng.gen_range(-2.5..2.5));
            if positions.iter().all(|q| (p.0 - q.0).hypot(p.1 - q.1) > 1.0) {
                positions.push(p);
            }
        }
        let scenario = Scenario {
            seed,
            params: ScenarioParams::default(),
            pedestrians: positions.into_iter().map(PedestrianSpec::stationary).collect(),
        };
        for (kind, model) in [
            (ControllerKind::MpcDcbf, ModelKind::DoubleIntegrator),
            (ControllerKind::MpcDcbf, ModelKind::Unicycle),
            (ControllerKind::Ours, ModelKind::DoubleIntegrator),
            (ControllerKind::Ours, ModelKind::Unicycle),
        ] {
            let mut cc = ControllerConfig::new(kind, model);
            cc.alpha = 500.0;
            let mut config = EpisodeConfig::new(cc);
            config.timing = Timing::None;
            let log = run_episode(&scenario, &config).unwrap();
            episodes += 1;
            let satisfied = log.records[..log.records.len() - 1]
                .iter()
                .all(|r| r.status == Some(SolverStatus::Solved) && r.slack == 0.0);
            if satisfied {
                qualifying += 1;
                worst = worst.min(min_clearance(&log));
            }
        }
    }
    ensure(qualifying >= 20 && worst >= 0.0, || format!("{qualifying} qualifying episodes, min clearance {worst}"))?;
    Ok(format!(
        "{sequences} step sequences; {qualifying} of {episodes} static episodes qualify, min clearance {worst:.3}"
    ))
}

fn gcbf_weakness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut tuples = 0;
    let mut violations = 0;
    while tuples < 10_000 {
        let model = if tuples % 2 == 0 {
            SystemModel::double_integrator(0.2)
        } else {
            SystemModel::unicycle(0.2)
        };
        let d = model.relative_degree;
        let x0 = random_start(&model, &mut rng);
        let o = ObstacleTrack::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            0.3,
        );
        if h_at(&x0, &o, 0) < 0.0 {
            continue;
        }
        let gamma = rng.gen_range(0.01..0.9);
        let eta = rng.gen_range(gamma..1.0);
        let h = cbf_sequence(&model, x0, &o, gamma, d, &mut rng);
        if h.len() <= d {
            continue;
        }
        tuples += 1;
        if gcbf_residual(h[d], h[0], eta, d) < 0.0 {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok(format!("{tuples} tuples, 0 violations"))
}

fn central_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, z: &[f64]) -> Vec<Vec<f64>> {
    let mut zp = z.to_vec();
    (0..z.len())
        .map(|j| {
            zp[j] = z[j] + 1e-6;
            let fp = f(&zp);
            zp[j] = z[j] - 1e-6;
            let fm = f(&zp);
            zp[j] = z[j];
            fp.iter().zip(&fm).map(|(a, b)| (a - b) / 2e-6).collect()
        })
        .collect()
}

/// Every working set whose equality-constrained solution is primal and dual
/// feasible.
fn brute_force_qp(n: usize, h: &[f64], g: &[f64], a: &[f64], b: &[f64]) -> Vec<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    let m = b.len();
    let mut found = Vec::new();
    for mask in 0u32..(1 << m) {
        let set: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        if set.len() > n {
            continue;
        }
        let q = set.len();
        let mut k = DMatrix::<f64>::zeros(n + q, n + q);
        let mut rhs = DVector::<f64>::zeros(n + q);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = h[i * n + j];
            }
            rhs[i] = -g[i];
        }
        for (r, &row) in set.iter().enumerate() {
            for i in 0..n {
                k[(i, n + r)] = -a[row * n + i];
                k[(n + r, i)] = a[row * n + i];
            }
            rhs[n + r] = b[row];
        }
        let Some(sol) = k.lu().solve(&rhs) else { continue };
        let x: Vec<f64> = (0..n).map(|i| sol[i]).collect();
        let lambda: Vec<f64> = (0..q).map(|r| sol[n + r]).collect();
        let primal = (0..m).all(|j| (0..n).map(|i| a[j * n + i] * x[i]).sum::<f64>() >= b[j] - 1e-10);
        if primal && lambda.iter().all(|l| *l >= -1e-10) {
            found.push((set, x, lambda));
        }
    }
    found
}

fn solver_certification() -> Outcome {
    let config = SolverConfig::default();
    let mut solved = 0;
    for kind in [ModelKind::DoubleIntegrator, ModelKind::Unicycle] {
        let model = SystemModel::for_kind(kind, 0.2);
        for formulation in Formulation::ALL {
            for seed in 0..25 {
                let (x0, obstacles) = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), kind, 5);
                let mut spec = OcpSpec::new(&model, formulation, (0.0, 4.0));
                spec.penalty_weight = 50.0;
                let p = build(&spec, &model, &x0, &obstacles).unwrap();
                let r = solve(&p, &config);
                if r.status == SolverStatus::Solved {
                    let report = kkt_check(&p, &r.solution, &r.multipliers);
                    ensure(report.within(1e-6), || format!("{kind:?} {formulation:?} seed {seed}: {report:?}"))?;
                    solved += 1;
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_jac = 0.0f64;
    for model in [SystemModel::double_integrator(0.2), SystemModel::unicycle(0.2)] {
        for _ in 0..100 {
            let (x0, _) = random_instance(&mut rng, model.kind, 0);
            let horizon = rng.gen_range(1..=10);
            let flat: Vec<f64> = (0..horizon)
                .flat_map(|_| model.input_bounds.iter().map(|b| rng.gen_range(b.lo + 1e-3..b.hi - 1e-3)).collect::<Vec<_>>())
                .collect();
            let controls = |z: &[f64]| -> Vec<Control> {
                z.chunks_exact(model.input_dim()).map(|u| Control::from_slice(model.kind, u)).collect()
            };
            let jac = model.rollout_jacobian(&x0, &controls(&flat)).unwrap();
            let fd = central_jacobian(
                |z| model.rollout(&x0, &controls(z)).unwrap().iter().flat_map(RobotState::to_vec).collect(),
                &flat,
            );
            let (n, m) = (model.state_dim(), model.input_dim());
            let (mut diff, mut scale) = (0.0, 0.0);
            for (col, fd_col) in fd.iter().enumerate() {
                for (row, v) in fd_col.iter().enumerate() {
                    let a = jac.get(row / n + 1, row % n, col / m, col % m);
                    diff += (a - v) * (a - v);
                    scale += v * v;
                }
            }
            worst_jac = worst_jac.max(diff.sqrt() / f64::max(scale.sqrt(), 1.0));
        }
    }
    ensure(worst_jac < 1e-5, || format!("rollout Jacobian relative error {worst_jac}"))?;

    let mut qp_checked = 0;
    for _ in 0..400 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=8);
        let root: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = (0..n).map(|k| root[k * n + i] * root[k * n + j]).sum::<f64>();
            }
            h[i * n + i] += 0.1;
        }
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let a: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let interior: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..m)
            .map(|j| (0..n).map(|i| a[j * n + i] * interior[i]).sum::<f64>() - rng.gen_range(0.01..1.0))
            .collect();
        let oracle = brute_force_qp(n, &h, &g, &a, &b);
        if oracle.len() != 1 {
            continue;
        }
        let (set, x_star, lambda_star) = &oracle[0];
        let qp = solve_qp(&QpProblem { n, hessian: &h, gradient: &g, a: &a, b: &b }).map_err(|e| format!("{e:?}"))?;
        let mut active = qp.active.clone();
        active.sort_unstable();
        ensure(&active == set, || format!("active set {active:?} vs {set:?}"))?;
        let x_ok = qp.x.iter().zip(x_star).all(|(x, y)| (x - y).abs() <= 1e-8);
        let l_ok = set.iter().enumerate().all(|(r, &row)| (qp.multipliers[row] - lambda_star[r]).abs() <= 1e-8);
        ensure(x_ok && l_ok, || format!("QP solution {:?} vs {x_star:?}", qp.x))?;
        qp_checked += 1;
    }
    ensure(solved >= 100 && qp_checked >= 300, || format!("{solved} solved, {qp_checked} QPs"))?;
    Ok(format!(
        "{solved} solved results pass KKT at 1e-6; rollout Jacobian rel err {worst_jac:.1e}; {qp_checked} QPs match enumeration"
    ))
}

fn min_pair_distance(peds: &[PedestrianState]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..peds.len() {
        for j in i + 1..peds.len() {
            let (a, b) = (peds[i].position, peds[j].position);
            best = best.min((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    best
}

fn run_crowd(peds: &mut [PedestrianState], goals: &[(f64, f64)], steps: usize) -> f64 {
    let params = OrcaAgentParams::default();
    let mut closest = min_pair_distance(peds);
    for _ in 0..steps {
        let v = pedestrian_velocities(peds, goals, &params, 0.2);
        for (p, v) in peds.iter_mut().zip(v) {
            p.position = (p.position.0 + v.0 * 0.2, p.position.1 + v.1 * 0.2);
            p.velocity = v;
        }
        closest = closest.min(min_pair_distance(peds));
    }
    closest
}

fn orca_soundness() -> Outcome {
    let (c, s) = (4.0 * 0.5f64.cos(), 4.0 * 0.5f64.sin());
    let mut pair = [
        PedestrianState { position: (-c, -s), velocity: (0.0, 0.0) },
        PedestrianState { position: (c, s), velocity: (0.0, 0.0) },
    ];
    let goals = [(c, s), (-c, -s)];
    let swap_gap = run_crowd(&mut pair, &goals, 125);
    let arrived = pair.iter().zip(goals).all(|(p, g)| (p.position.0 - g.0).hypot(p.position.1 - g.1) < 1e-6);
    ensure(swap_gap >= 0.6 - 1e-6 && arrived, || format!("swap: closest {swap_gap}, arrived {arrived}"))?;

    let mut crowd_gap = f64::INFINITY;
    for seed in 0..50 {
        let scenario = generate_scenario(seed, 5).unwrap();
        let goals: Vec<(f64, f64)> = scenario.pedestrians.iter().map(|p| p.goal).collect();
        let mut peds: Vec<PedestrianState> = scenario
            .pedestrians
            .iter()
            .map(|p| PedestrianState { position: p.start, velocity: (0.0, 0.0) })
            .collect();
        crowd_gap = crowd_gap.min(run_crowd(&mut peds, &goals, 125));
    }
    ensure(crowd_gap >= 0.6 - 1e-6, || format!("crowd closest approach {crowd_gap}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = OrcaAgentParams::default();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..8);
        let peds: Vec<PedestrianState> = (0..n)
            .map(|_| PedestrianState {
                position: (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)),
                velocity: (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            })
            .collect();
        let goals: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0))).collect();
        let mirrored: Vec<PedestrianState> = peds
            .iter()
            .map(|p| PedestrianState {
                position: (p.position.0, -p.position.1),
                velocity: (p.velocity.0, -p.velocity.1),
            })
            .collect();
        let mirrored_goals: Vec<(f64, f64)> = goals.iter().map(|g| (g.0, -g.1)).collect();
        let v = pedestrian_velocities(&peds, &goals, &params, 0.2);
        let w = pedestrian_velocities(&mirrored, &mirrored_goals, &params, 0.2);
        for (a, b) in v.iter().zip(&w) {
            worst = worst.max((a.0 - b.0).abs()).max((a.1 + b.1).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("mirror error {worst}"))?;
    Ok(format!(
        "swap closest {swap_gap:.3} m; 50 crowds closest {crowd_gap:.3} m; mirror error {worst:.1e}"
    ))
}

fn safenav(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_safenav")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        safenav(&["episode", "--seed", "42", "--out", out.to_str().unwrap()])?;
    }
    for name in ["episode_seed42.jsonl", "trajectory_seed42.csv", "trajectory_seed42.svg"] {
        ensure(read(&a.join(name)) == read(&b.join(name)), || format!("{name} differs"))?;
    }

    let results = dir.path().join("results");
    let recomputed = dir.path().join("recomputed");
    safenav(&[
        "bench",
        "--controller",
        "mpc-dc,mpc-dcbf,scmpc-cbf,ours",
        "--gamma",
        "0.08,0.12",
        "--episodes",
        "10",
        "--penalty-samples",
        "30",
        "--timing",
        "wall",
        "--out",
        results.to_str().unwrap(),
    ])?;
    safenav(&[
        "summarize",
        "--logs",
        results.join("logs").to_str().unwrap(),
        "--out",
        recomputed.to_str().unwrap(),
    ])?;
    for name in ["summary.csv", "summary.txt", "summary.json"] {
        ensure(read(&results.join(name)) == read(&recomputed.join(name)), || format!("recomputed {name} differs"))?;
    }
    Ok("episode --seed 42 byte-identical twice; tables recomputed from 70 logs match".into())
}

fn performance(benches: &[(ModelKind, Vec<BenchmarkSummary>, Vec<EpisodeLog>)]) -> Outcome {
    let mut parts = Vec::new();
    for (model, _, logs) in benches {
        let (mut total, mut calls, mut worst_step) = (0.0, 0usize, 0.0f64);
        for log in logs {
            for r in &log.records {
                if r.status.is_some() {
                    total += r.solve_ms;
                    calls += 1;
                }
                worst_step = worst_step.max(r.step_ms);
            }
        }
        let mean = total / calls as f64;
        ensure(calls > 0 && mean <= 200.0 && worst_step <= 1000.0, || {
            format!("{model:?}: mean solve {mean} ms over {calls} calls, worst step {worst_step} ms")
        })?;
        parts.push(format!("{}: mean solve {mean:.2} ms over {calls} calls, worst step {worst_step:.1} ms", model.key()));
    }
    Ok(parts.join("; "))
}

/// Default 100-episode γ sweep over every controller, with wall timing.
fn benchmark(model: ModelKind) -> (ModelKind, Vec<BenchmarkSummary>, Vec<EpisodeLog>) {
    let config = RunConfig {
        model,
        timing: Some(Timing::Wall),
        ..RunConfig::default()
    };
    let mut logs = Vec::new();
    let summaries = run_benchmark_with(&config, |run| {
        if run.summary.controller != ControllerKind::Orca {
            logs.extend(run.logs.iter().cloned());
        }
        Ok(())
    })
    .expect("benchmark runs");
    (model, summaries, logs)
}

fn main() {
    let start = Instant::now();
    let benches = [benchmark(ModelKind::DoubleIntegrator), benchmark(ModelKind::Unicycle)];
    eprintln!("benchmarks finished in {:.0} s", start.elapsed().as_secs_f64());

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("exact-penalty equivalence", Box::new(exact_penalty)),
        ("elastic totality", Box::new(|| elastic_totality(&benches))),
        ("feasibility-gap trend", Box::new(|| feasibility_gap(&benches))),
        ("safety ordering trend", Box::new(|| safety_ordering(&benches))),
        ("forward invariance", Box::new(forward_invariance)),
        ("GCBF weakness ordering", Box::new(gcbf_weakness)),
        ("solver certification", Box::new(solver_certification)),
        ("ORCA soundness", Box::new(orca_soundness)),
        ("determinism", Box::new(determinism)),
        ("performance sanity", Box::new(|| performance(&benches))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}) [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
