#![allow(dead_code)]

use rand::Rng;
use safenav::dynamics::{ModelKind, ObstacleTrack, RobotState, SystemModel};

pub const DT: f64 = 0.2;

pub fn models() -> [SystemModel; 2] {
    [SystemModel::double_integrator(DT), SystemModel::unicycle(DT)]
}

/// Robot somewhere below the origin heading roughly toward `(0, 4)`, with
/// `n_obstacles` pedestrians around it that do not overlap the robot.
pub fn random_instance<R: Rng>(rng: &mut R, kind: ModelKind, n_obstacles: usize) -> (RobotState, Vec<ObstacleTrack>) {
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
        let ox = px + rng.gen_range(-4.0..4.0);
        let oy = py + rng.gen_range(-4.0..4.0);
        if (ox - px).hypot(oy - py) < 0.9 {
            continue;
        }
        obstacles.push(ObstacleTrack::new(
            ox,
            oy,
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            0.3,
        ));
    }
    (x0, obstacles)
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, z: &[f64], h: f64) -> Vec<f64> {
    let mut zp = z.to_vec();
    (0..z.len())
        .map(|j| {
            zp[j] = z[j] + h;
            let fp = f(&zp);
            zp[j] = z[j] - h;
            let fm = f(&zp);
            zp[j] = z[j];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector function, row-major `m × n`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, z: &[f64], h: f64) -> Vec<f64> {
    let n = z.len();
    let mut zp = z.to_vec();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        zp[j] = z[j] + h;
        let fp = f(&zp);
        zp[j] = z[j] - h;
        let fm = f(&zp);
        zp[j] = z[j];
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    let m = cols.first().map_or(0, Vec::len);
    let mut out = vec![0.0; m * n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..m {
            out[i * n + j] = col[i];
        }
    }
    out
}

/// `‖a − b‖ / max(‖b‖, 1)` in the Euclidean norm.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}
