//! Optimal reciprocal collision avoidance for holonomic disc agents.
//!
//! Used both to move simulated pedestrians and as the velocity-level baseline
//! controller for the holonomic robot.

mod lp;

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use lp::Line;

/// Offset applied when two agent centers coincide exactly.
pub const COINCIDENT_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn det(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn normalized(self) -> Vec2 {
        self * (1.0 / self.norm_sq().sqrt())
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl From<(f64, f64)> for Vec2 {
    fn from((x, y): (f64, f64)) -> Self {
        Vec2::new(x, y)
    }
}

impl From<Vec2> for (f64, f64) {
    fn from(v: Vec2) -> Self {
        (v.x, v.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrcaAgentParams {
    pub radius: f64,
    pub max_speed: f64,
    pub preferred_speed: f64,
    pub time_horizon: f64,
    pub neighbor_distance: f64,
    pub max_neighbors: usize,
}

impl Default for OrcaAgentParams {
    fn default() -> Self {
        OrcaAgentParams {
            radius: 0.3,
            max_speed: 1.0,
            preferred_speed: 1.0,
            time_horizon: 5.0,
            neighbor_distance: 10.0,
            max_neighbors: 10,
        }
    }
}

impl OrcaAgentParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.radius,
            self.max_speed,
            self.preferred_speed,
            self.time_horizon,
            self.neighbor_distance,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.max_neighbors == 0 {
            return Err(Error::Config(format!("ORCA parameters must be positive: {self:?}")));
        }
        if self.preferred_speed > self.max_speed {
            return Err(Error::Config(format!(
                "preferred speed {} exceeds max speed {}",
                self.preferred_speed, self.max_speed
            )));
        }
        Ok(())
    }
}

/// Position, velocity and radius of a disc agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: (f64, f64),
    pub velocity: (f64, f64),
    pub radius: f64,
}

/// Permitted velocities `{v : (v − point)·normal ≥ 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub point: (f64, f64),
    /// Unit normal pointing into the permitted side.
    pub normal: (f64, f64),
}

impl HalfPlane {
    pub fn signed_distance(&self, v: (f64, f64)) -> f64 {
        (v.0 - self.point.0) * self.normal.0 + (v.1 - self.point.1) * self.normal.1
    }

    pub fn contains(&self, v: (f64, f64), tol: f64) -> bool {
        self.signed_distance(v) >= -tol
    }

    fn to_line(self) -> Line {
        Line {
            point: self.point.into(),
            direction: Vec2::new(self.normal.1, -self.normal.0),
        }
    }
}

/// The ORCA half-plane `me` must respect with respect to `other`, taking half
/// of the velocity correction that avoids collision within `tau`.
pub fn orca_halfplane(me: &AgentState, other: &AgentState, tau: f64, dt: f64) -> HalfPlane {
    let mut rel_pos = Vec2::from(other.position) - Vec2::from(me.position);
    if rel_pos.norm_sq() == 0.0 {
        rel_pos = Vec2::new(COINCIDENT_OFFSET, 0.0);
    }
    let rel_vel = Vec2::from(me.velocity) - Vec2::from(other.velocity);
    let dist_sq = rel_pos.norm_sq();
    let r = me.radius + other.radius;
    let r_sq = r * r;

    let (direction, u) = if dist_sq > r_sq {
        let inv_tau = 1.0 / tau;
        let w = rel_vel - rel_pos * inv_tau;
        let w_len_sq = w.norm_sq();
        let dot1 = w.dot(rel_pos);
        if dot1 < 0.0 && dot1 * dot1 > r_sq * w_len_sq {
            // closest boundary point lies on the truncation circle
            let w_len = w_len_sq.sqrt();
            let unit_w = w * (1.0 / w_len);
            (Vec2::new(unit_w.y, -unit_w.x), unit_w * (r * inv_tau - w_len))
        } else {
            let leg = (dist_sq - r_sq).sqrt();
            let direction = if rel_pos.det(w) > 0.0 {
                Vec2::new(rel_pos.x * leg - rel_pos.y * r, rel_pos.x * r + rel_pos.y * leg) * (1.0 / dist_sq)
            } else {
                Vec2::new(rel_pos.x * leg + rel_pos.y * r, -rel_pos.x * r + rel_pos.y * leg) * (-1.0 / dist_sq)
            };
            let dot2 = rel_vel.dot(direction);
            (direction, direction * dot2 - rel_vel)
        }
    } else {
        let inv_dt = 1.0 / dt;
        let w = rel_vel - rel_pos * inv_dt;
        let w_len = w.norm_sq().sqrt();
        let unit_w = w * (1.0 / w_len);
        (Vec2::new(unit_w.y, -unit_w.x), unit_w * (r * inv_dt - w_len))
    };
    let point = Vec2::from(me.velocity) + u * 0.5;
    HalfPlane {
        point: point.into(),
        normal: (-direction.y, direction.x),
    }
}

/// Indices of the agents in `others` that `me` reacts to: those closer than
/// the neighbor distance, nearest first, at most `max_neighbors`. Equal
/// distances keep index order.
pub fn select_neighbors(me: &AgentState, others: &[AgentState], params: &OrcaAgentParams) -> Vec<usize> {
    let range_sq = params.neighbor_distance * params.neighbor_distance;
    let mut candidates: Vec<(f64, usize)> = others
        .iter()
        .enumerate()
        .filter_map(|(i, o)| {
            let d = Vec2::from(o.position) - Vec2::from(me.position);
            let d_sq = d.norm_sq();
            (d_sq < range_sq).then_some((d_sq, i))
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates.truncate(params.max_neighbors);
    candidates.into_iter().map(|(_, i)| i).collect()
}

/// New velocity for `me`: the point closest to `preferred` inside every
/// neighbor's half-plane and the `max_speed` disk. When the half-planes have
/// no common point the least-penetration velocity is returned instead.
/// Neighbors are used in the given order.
pub fn compute_velocity(
    me: &AgentState,
    neighbors: &[AgentState],
    params: &OrcaAgentParams,
    preferred: (f64, f64),
    dt: f64,
) -> (f64, f64) {
    let lines: Vec<Line> = neighbors
        .iter()
        .map(|o| orca_halfplane(me, o, params.time_horizon, dt).to_line())
        .collect();
    let mut v = Vec2::default();
    let fail = lp::program2(&lines, params.max_speed, preferred.into(), false, &mut v);
    if fail < lines.len() {
        lp::program3(&lines, fail, params.max_speed, &mut v);
    }
    v.into()
}

/// Velocity of magnitude `min(speed, distance / dt)` toward `goal`; zero at
/// the goal.
pub fn preferred_velocity(position: (f64, f64), goal: (f64, f64), speed: f64, dt: f64) -> (f64, f64) {
    let d = Vec2::from(goal) - Vec2::from(position);
    let dist = d.norm_sq().sqrt();
    if dist == 0.0 {
        return (0.0, 0.0);
    }
    let magnitude = speed.min(dist / dt);
    (d * (magnitude / dist)).into()
}
