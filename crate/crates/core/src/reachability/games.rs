//! The two tracking games: planar relative dynamics between the tracker and
//! the planning reference, and the vertical `(z, v_z)` subsystem.

use serde::{Deserialize, Serialize};

use super::solver::{upwind, Game};
use crate::dynamics::{Interval, TrackerBounds};

/// Planar tracking game over `(d, psi, v_T, v_N)`.
///
/// Uses the rotating-frame kinematics of the relative state:
///
/// ```text
/// d'   = v_T cos psi + v_N sin psi
/// psi' = -c + (v_N cos psi - v_T sin psi) / d
/// v_T' = a_T + c v_N
/// v_N' = a_N - c (v_T + v)
/// ```
///
/// where `(a_T, a_N)` is the tracker acceleration `(g cos u1, -g sin u2)`
/// rotated into the planner frame. The planner heading is not a relative
/// coordinate, so the tracker is only credited with the accelerations
/// available at every heading: the largest disc centred at zero inside the
/// acceleration box.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarGame {
    pub speed: f64,
    pub turn_rate: Interval,
    /// Radius of the heading-independent acceleration disc [m/s^2].
    pub accel_radius: f64,
    pub d_max: f64,
}

impl PlanarGame {
    pub fn new(speed: f64, turn_rate: Interval, bounds: &TrackerBounds, gravity: f64, d_max: f64) -> Self {
        let ax = bounds.accel_x(gravity);
        let ay = bounds.accel_y(gravity);
        let accel_radius = (-ax.lo).min(ax.hi).min(-ay.lo).min(ay.hi).max(0.0);
        Self {
            speed,
            turn_rate,
            accel_radius,
            d_max,
        }
    }

    /// World-frame acceleration weights `(q_x, q_y)` such that the tracker
    /// term of `p . f` is `q_x a_x + q_y a_y` at planner heading `theta`.
    #[inline]
    pub fn accel_weights(p: &[f64; 4], cos_th: f64, sin_th: f64) -> (f64, f64) {
        (p[2] * cos_th - p[3] * sin_th, p[2] * sin_th + p[3] * cos_th)
    }

    /// Minimum over the acceleration disc of the upwinded velocity terms.
    /// The objective is linear on each quadrant around the kink point
    /// `(-k_t, -k_n)`, so the minimum is at a disc point facing one of the
    /// four slopes, where a kink line meets the circle, or at the kink point.
    #[inline]
    fn tracker_min(&self, k_t: f64, k_n: f64, pm: &[f64; 4], pp: &[f64; 4]) -> f64 {
        let a = self.accel_radius;
        let cost = |at: f64, an: f64| upwind(at + k_t, pm[2], pp[2]) + upwind(an + k_n, pm[3], pp[3]);
        let mut best = f64::INFINITY;
        for st in [pm[2], pp[2]] {
            for sn in [pm[3], pp[3]] {
                let n = st.hypot(sn);
                let (at, an) = if n > 0.0 { (-a * st / n, -a * sn / n) } else { (0.0, 0.0) };
                best = best.min(cost(at, an));
            }
        }
        if k_t.abs() <= a {
            let h = (a * a - k_t * k_t).sqrt();
            best = best.min(cost(-k_t, h)).min(cost(-k_t, -h));
        }
        if k_n.abs() <= a {
            let h = (a * a - k_n * k_n).sqrt();
            best = best.min(cost(h, -k_n)).min(cost(-h, -k_n));
        }
        if k_t.hypot(k_n) <= a {
            best = best.min(cost(-k_t, -k_n));
        }
        best
    }
}

impl Game<4> for PlanarGame {
    fn stage_cost(&self, x: &[f64; 4]) -> f64 {
        x[0]
    }

    fn upwind_hamiltonian(&self, x: &[f64; 4], pm: &[f64; 4], pp: &[f64; 4]) -> f64 {
        let (s, c) = x[1].sin_cos();
        let f_d = x[2] * c + x[3] * s;
        let w = (x[3] * c - x[2] * s) / x[0];
        let base = upwind(f_d, pm[0], pp[0]);
        // Upwinding makes the planner's payoff only piecewise affine in c, so
        // besides the endpoints try zero and the bearing-rate kink.
        let turn = self.turn_rate;
        [turn.lo, turn.hi, turn.clamp(0.0), turn.clamp(w)]
            .into_iter()
            .map(|turn| {
                base + upwind(w - turn, pm[1], pp[1]) + self.tracker_min(turn * x[3], -turn * (x[2] + self.speed), pm, pp)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn max_speeds(&self, x: &[f64; 4]) -> [f64; 4] {
        let (s, c) = x[1].sin_cos();
        let cmax = self.turn_rate.max_abs();
        [
            (x[2] * c + x[3] * s).abs(),
            (x[3] * c - x[2] * s).abs() / x[0] + cmax,
            cmax * x[3].abs() + self.accel_radius,
            cmax * (x[2] + self.speed).abs() + self.accel_radius,
        ]
    }

    fn value_cap(&self) -> f64 {
        self.d_max
    }
}

/// Vertical game over `(z, v_z)`: `z' = v_z`, `v_z' = u3 - g`, planner height
/// fixed. Cost `|z|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalGame {
    /// Range of `u3 - g`.
    pub accel: Interval,
    pub z_max: f64,
}

impl Game<2> for VerticalGame {
    fn stage_cost(&self, x: &[f64; 2]) -> f64 {
        x[0].abs()
    }

    fn upwind_hamiltonian(&self, x: &[f64; 2], pm: &[f64; 2], pp: &[f64; 2]) -> f64 {
        let coast = if self.accel.contains(0.0) { 0.0 } else { self.accel.lo };
        let thrust = [self.accel.lo, self.accel.hi, coast]
            .iter()
            .map(|&a| upwind(a, pm[1], pp[1]))
            .fold(f64::INFINITY, f64::min);
        upwind(x[1], pm[0], pp[0]) + thrust
    }

    fn max_speeds(&self, x: &[f64; 2]) -> [f64; 2] {
        [x[1].abs(), self.accel.max_abs()]
    }

    fn value_cap(&self) -> f64 {
        self.z_max
    }
}
