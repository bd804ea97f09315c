//! Exact containment of a disc in a finite union of discs.

use std::f64::consts::TAU;

use super::Circle;

/// Angular gaps narrower than this are treated as covered.
const ARC_EPS: f64 = 1e-10;

/// Arc of the circle `(q, rho)` lying inside the closed disc `d`, as
/// `(start, width)` in radians, or `None` if they meet in at most a point.
/// A width of `TAU` means the whole circle.
fn arc_inside(q: [f64; 2], rho: f64, d: &Circle) -> Option<(f64, f64)> {
    let dx = d.center[0] - q[0];
    let dy = d.center[1] - q[1];
    let dist = dx.hypot(dy);
    if dist + rho <= d.radius {
        return Some((0.0, TAU));
    }
    if dist >= rho + d.radius || dist + d.radius <= rho {
        return None;
    }
    let k = (rho * rho + dist * dist - d.radius * d.radius) / (2.0 * rho * dist);
    let half = k.clamp(-1.0, 1.0).acos();
    if half <= 0.0 {
        return None;
    }
    let mid = dy.atan2(dx);
    Some(((mid - half).rem_euclid(TAU), 2.0 * half))
}

/// Whether the arc `[start, start + width]` is covered by the union of
/// `arcs` (all given as `(start, width)` with start in `[0, TAU)`).
fn arc_covered(start: f64, width: f64, arcs: &[(f64, f64)]) -> bool {
    if arcs.iter().any(|a| a.1 >= TAU) {
        return true;
    }
    // Work in coordinates relative to the target arc start.
    let mut spans: Vec<(f64, f64)> = Vec::with_capacity(arcs.len() * 2);
    for &(s, w) in arcs {
        let s = (s - start).rem_euclid(TAU);
        spans.push((s, s + w));
        if s + w > TAU {
            spans.push((s - TAU, s + w - TAU));
        }
    }
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut reach = 0.0;
    for (s, e) in spans {
        if s > reach + ARC_EPS {
            break;
        }
        reach = f64::max(reach, e);
        if reach >= width - ARC_EPS {
            return true;
        }
    }
    reach >= width - ARC_EPS
}

/// True iff the closed disc `target` lies inside the union of `discs`.
///
/// The boundary of `target` must be covered, and every arc of a member
/// circle inside `target` must be covered by the other members; otherwise an
/// uncovered pocket would have to be bounded by such an arc.
pub fn disc_in_union(target: &Circle, discs: &[Circle]) -> bool {
    let q = target.center;
    let rho = target.radius;
    let mut touching: Vec<&Circle> = Vec::new();
    for d in discs {
        let dx = d.center[0] - q[0];
        let dy = d.center[1] - q[1];
        let reach = d.radius + rho;
        // Cheap rejection with slack; the exact tests follow.
        if dx * dx + dy * dy > reach * reach * (1.0 + 1e-9) {
            continue;
        }
        let dist = d.distance_to_center(q);
        if dist + rho <= d.radius {
            return true;
        }
        if dist < reach {
            touching.push(d);
        }
    }
    if rho <= 0.0 || !touching.iter().any(|d| d.contains(q)) {
        return false;
    }

    let boundary: Vec<(f64, f64)> = touching.iter().filter_map(|d| arc_inside(q, rho, d)).collect();
    if !arc_covered(0.0, TAU, &boundary) {
        return false;
    }

    for di in &touching {
        let Some((s, w)) = arc_inside(di.center, di.radius, target) else {
            continue;
        };
        // Copies of `di` itself say nothing about its own rim.
        let others: Vec<(f64, f64)> = touching
            .iter()
            .filter(|dj| !(dj.center == di.center && dj.radius == di.radius))
            .filter_map(|dj| arc_inside(di.center, di.radius, dj))
            .collect();
        if !arc_covered(s, w, &others) {
            return false;
        }
    }
    true
}
