//! Incremental 2-D linear programming over ORCA lines, following RVO2.

use super::Vec2;

const EPSILON: f64 = 1e-9;

/// Directed line; the permitted side is to the left of `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Line {
    pub point: Vec2,
    pub direction: Vec2,
}

impl Line {
    /// Signed distance of `v` into the forbidden (right) side.
    pub fn violation(&self, v: Vec2) -> f64 {
        self.direction.det(self.point - v)
    }
}

/// Optimizes along line `no` subject to lines `0..no` and the speed disk.
fn program1(lines: &[Line], no: usize, radius: f64, opt: Vec2, direction_opt: bool, result: &mut Vec2) -> bool {
    let line = lines[no];
    let dot = line.point.dot(line.direction);
    let discriminant = dot * dot + radius * radius - line.point.norm_sq();
    if discriminant < 0.0 {
        return false;
    }
    let sqrt_d = discriminant.sqrt();
    let mut t_left = -dot - sqrt_d;
    let mut t_right = -dot + sqrt_d;

    for other in &lines[..no] {
        let denominator = line.direction.det(other.direction);
        let numerator = other.direction.det(line.point - other.point);
        if denominator.abs() <= EPSILON {
            if numerator < 0.0 {
                return false;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return false;
        }
    }

    *result = if direction_opt {
        if opt.dot(line.direction) > 0.0 {
            line.point + line.direction * t_right
        } else {
            line.point + line.direction * t_left
        }
    } else {
        let t = line.direction.dot(opt - line.point);
        line.point + line.direction * t.clamp(t_left, t_right)
    };
    true
}

/// Closest point to `opt` (or furthest along `opt` when `direction_opt`) in the
/// intersection of all lines and the disk. Returns the index of the first line
/// that could not be satisfied, or `lines.len()` on success.
pub(crate) fn program2(lines: &[Line], radius: f64, opt: Vec2, direction_opt: bool, result: &mut Vec2) -> usize {
    *result = if direction_opt {
        opt * radius
    } else if opt.norm_sq() > radius * radius {
        opt.normalized() * radius
    } else {
        opt
    };
    for (i, line) in lines.iter().enumerate() {
        if line.violation(*result) > 0.0 {
            let previous = *result;
            if !program1(lines, i, radius, opt, direction_opt, result) {
                *result = previous;
                return i;
            }
        }
    }
    lines.len()
}

/// Minimizes the largest violation over lines `begin..` when the constraints
/// have no common point inside the disk.
pub(crate) fn program3(lines: &[Line], begin: usize, radius: f64, result: &mut Vec2) {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        if lines[i].violation(*result) <= distance {
            continue;
        }
        let mut projected = Vec::with_capacity(i);
        for j in 0..i {
            let determinant = lines[i].direction.det(lines[j].direction);
            let point = if determinant.abs() <= EPSILON {
                if lines[i].direction.dot(lines[j].direction) > 0.0 {
                    continue;
                }
                (lines[i].point + lines[j].point) * 0.5
            } else {
                let t = lines[j].direction.det(lines[i].point - lines[j].point) / determinant;
                lines[i].point + lines[i].direction * t
            };
            projected.push(Line {
                point,
                direction: (lines[j].direction - lines[i].direction).normalized(),
            });
        }
        let previous = *result;
        let normal = Vec2::new(-lines[i].direction.y, lines[i].direction.x);
        if program2(&projected, radius, normal, true, result) < projected.len() {
            *result = previous;
        }
        distance = lines[i].violation(*result);
    }
}
