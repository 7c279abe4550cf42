mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safenav::barrier::{dcbf_residual, gcbf_decay, gcbf_residual, h_value};
use safenav::dynamics::{predict_obstacle, Control, ModelKind, ObstacleTrack, RobotState, SystemModel};

const R_I: f64 = 0.6;

fn random_control<R: Rng>(model: &SystemModel, rng: &mut R) -> Control {
    let u: Vec<f64> = model.input_bounds.iter().map(|b| rng.gen_range(b.lo..=b.hi)).collect();
    Control::from_slice(model.kind, &u)
}

fn random_start<R: Rng>(model: &SystemModel, rng: &mut R) -> RobotState {
    let v: Vec<f64> = match model.kind {
        ModelKind::DoubleIntegrator => vec![
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ],
        ModelKind::Unicycle => {
            vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-3.1..3.1)]
        }
    };
    RobotState::from_slice(model.kind, &v).unwrap()
}

fn h_at(x: &RobotState, o: &ObstacleTrack, k: usize, dt: f64) -> f64 {
    let p = predict_obstacle(o, k, dt);
    h_value(x.position(), (p.px, p.py), R_I)
}

/// Steps forward with randomly drawn controls, keeping only controls that
/// satisfy the hard CBF condition. Returns the barrier history; the sequence
/// ends early when no sampled control satisfies the condition.
fn cbf_sequence<R: Rng>(
    model: &SystemModel,
    x0: RobotState,
    obstacle: &ObstacleTrack,
    gamma: f64,
    steps: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut x = x0;
    let mut h = vec![h_at(&x, obstacle, 0, model.dt)];
    for k in 0..steps {
        let next = (0..64).find_map(|_| {
            let cand = model.step(&x, &random_control(model, rng)).unwrap();
            let hn = h_at(&cand, obstacle, k + 1, model.dt);
            (dcbf_residual(hn, h[k], gamma) >= 0.0).then_some((cand, hn))
        });
        let Some((xn, hn)) = next else { break };
        x = xn;
        h.push(hn);
    }
    h
}

#[test]
fn cbf_steps_keep_the_safe_set_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut sequences = 0;
    let mut total_steps = 0;
    for model in common::models() {
        for _ in 0..600 {
            let x0 = random_start(&model, &mut rng);
            let moving = rng.gen_bool(0.5);
            let (ox, oy) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let (vx, vy) = if moving {
                (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
            } else {
                (0.0, 0.0)
            };
            let obstacle = ObstacleTrack::new(ox, oy, vx, vy, 0.3);
            if h_at(&x0, &obstacle, 0, model.dt) < 0.0 {
                continue;
            }
            let gamma = rng.gen_range(0.05..0.5);
            let h = cbf_sequence(&model, x0, &obstacle, gamma, 30, &mut rng);
            for (t, ht) in h.iter().enumerate() {
                assert!(*ht >= 0.0, "{:?}: h_{t} = {ht}", model.kind);
                assert!(*ht >= (1.0 - gamma).powi(t as i32) * h[0] * (1.0 - 1e-12));
            }
            sequences += 1;
            total_steps += h.len() - 1;
        }
    }
    assert!(sequences >= 1000, "{sequences} sequences");
    assert!(total_steps >= 10 * sequences, "{total_steps} steps");
}

#[test]
fn generalized_condition_is_implied_by_per_step_conditions() {
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
        let obstacle = ObstacleTrack::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            0.3,
        );
        if h_at(&x0, &obstacle, 0, model.dt) < 0.0 {
            continue;
        }
        let gamma = rng.gen_range(0.01..0.9);
        let eta = rng.gen_range(gamma..1.0);
        let h = cbf_sequence(&model, x0, &obstacle, gamma, d, &mut rng);
        if h.len() <= d {
            continue;
        }
        tuples += 1;
        if gcbf_residual(h[d], h[0], eta, d) < 0.0 || gcbf_residual(h[d], h[0], gamma, d) < -1e-12 {
            violations += 1;
        }
        assert!(gcbf_decay(eta, d) * h[0] <= gcbf_decay(gamma, d) * h[0]);
    }
    assert_eq!(violations, 0);
}

proptest! {
    #[test]
    fn decay_chain_dominates_the_generalized_bound(
        h0 in 0.0f64..10.0,
        increments in prop::collection::vec(0.0f64..1.0, 1..6),
        gamma in 0.01f64..0.99,
        eta_frac in 0.0f64..1.0,
    ) {
        let eta = gamma + (1.0 - gamma) * eta_frac;
        // Any sequence with h_{k+1} ≥ (1 − γ) h_k, built from nonnegative excess.
        let mut h = vec![h0];
        for e in &increments {
            let last = *h.last().unwrap();
            h.push((1.0 - gamma) * last + e);
        }
        let d = increments.len();
        prop_assert!(gcbf_residual(h[d], h0, eta, d) >= 0.0);
        prop_assert!(gcbf_residual(h[d], h0, gamma, d) >= -1e-12);
    }
}
