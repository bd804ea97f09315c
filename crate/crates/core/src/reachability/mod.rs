//! Tracking error bound and optimal tracking controller from a pursuit game
//! between the tracker (minimizing relative distance) and the planning
//! reference (maximizing it).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_angle, PlannerControl, PlannerState, TrackerBounds, TrackerControl, TrackerState};

pub mod games;
pub mod grid;
pub mod model;
pub mod solver;
pub mod teb;

pub use games::{PlanarGame, VerticalGame};
pub use grid::{Axis, AxisKind, ValueGrid};
pub use model::{
    solve_value, solve_vertical, solve_z_subsystem, GridSpec, RolloutOptions, RolloutStats, TrackingModel, TrackingParams,
    ZGridSpec,
};
pub use solver::{solve_game, upwind, Game, SolveReport, SolverOptions};
pub use teb::{cell_variation, extract_teb, velocity_min_projection, vertical_extent, TrackingBound};

/// Tracker state relative to the planning reference, in the planner's
/// Frenet frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeState {
    /// Planar distance [m].
    pub d: f64,
    /// Bearing of the tracker seen from the planner, relative to its heading [rad].
    pub psi: f64,
    /// Relative velocity along the planner heading [m/s].
    pub v_t: f64,
    /// Relative velocity normal to the planner heading [m/s].
    pub v_n: f64,
}

impl RelativeState {
    pub const ORIGIN: RelativeState = RelativeState {
        d: 0.0,
        psi: 0.0,
        v_t: 0.0,
        v_n: 0.0,
    };

    pub fn to_array(self) -> [f64; 4] {
        [self.d, self.psi, self.v_t, self.v_n]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            d: a[0],
            psi: a[1],
            v_t: a[2],
            v_n: a[3],
        }
    }

    /// Planar displacement of the tracker in the planner frame.
    pub fn frenet_offset(&self) -> [f64; 2] {
        [self.d * self.psi.cos(), self.d * self.psi.sin()]
    }
}

/// Relative state of the tracker with respect to a planner moving at `speed`.
pub fn relative_state(s: &TrackerState, p: &PlannerState, speed: f64) -> RelativeState {
    let (sin_t, cos_t) = p.theta.sin_cos();
    let dx = s.x - p.x;
    let dy = s.y - p.y;
    let ex = cos_t * dx + sin_t * dy;
    let ey = -sin_t * dx + cos_t * dy;
    let d = ex.hypot(ey);
    let psi = if d == 0.0 { 0.0 } else { wrap_angle(ey.atan2(ex)) };
    let wx = s.vx - speed * cos_t;
    let wy = s.vy - speed * sin_t;
    RelativeState {
        d,
        psi,
        v_t: cos_t * wx + sin_t * wy,
        v_n: -sin_t * wx + cos_t * wy,
    }
}

/// Rebuilds a tracker state from a planner state and a relative state.
pub fn tracker_from_relative(p: &PlannerState, r: &RelativeState, speed: f64, z: f64, vz: f64) -> TrackerState {
    let (sin_t, cos_t) = p.theta.sin_cos();
    let [ex, ey] = r.frenet_offset();
    let wx = cos_t * r.v_t - sin_t * r.v_n;
    let wy = sin_t * r.v_t + cos_t * r.v_n;
    TrackerState {
        x: p.x + cos_t * ex - sin_t * ey,
        y: p.y + sin_t * ex + cos_t * ey,
        z,
        vx: wx + speed * cos_t,
        vy: wy + speed * sin_t,
        vz,
    }
}

/// Relative dynamics in the simplified form, with the pitch and roll inputs
/// entering directly as accelerations:
///
/// ```text
/// d'   = v_T cos psi + v_N sin psi
/// psi' = -c - v_T sin psi + v_N cos psi
/// v_T' = u1 cos theta - u2 sin theta + c v_T
/// v_N' = -u1 sin theta - u2 cos theta - c v_T
/// ```
///
/// These disagree with the rotating-frame kinematics of [`relative_state`]
/// (see [`relative_derivative_kinematic`]); the solver uses the latter.
pub fn relative_derivative(r: &RelativeState, u: &TrackerControl, c: PlannerControl, theta: f64) -> [f64; 4] {
    let (sp, cp) = r.psi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let c = c.turn_rate;
    [
        r.v_t * cp + r.v_n * sp,
        -c - r.v_t * sp + r.v_n * cp,
        u.pitch * ct - u.roll * st + c * r.v_t,
        -u.pitch * st - u.roll * ct - c * r.v_t,
    ]
}

/// Relative dynamics derived from the tracking model `(g cos u1, -g sin u2)`
/// accelerations and the planning model at `speed`.
pub fn relative_derivative_kinematic(
    r: &RelativeState,
    u: &TrackerControl,
    c: PlannerControl,
    theta: f64,
    speed: f64,
    gravity: f64,
) -> [f64; 4] {
    let (sp, cp) = r.psi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let ax = gravity * u.pitch.cos();
    let ay = -gravity * u.roll.sin();
    let a_t = ax * ct + ay * st;
    let a_n = -ax * st + ay * ct;
    let c = c.turn_rate;
    let psi_dot = if r.d > 0.0 {
        -c + (r.v_n * cp - r.v_t * sp) / r.d
    } else {
        -c
    };
    [
        r.v_t * cp + r.v_n * sp,
        psi_dot,
        a_t + c * r.v_n,
        a_n - c * (r.v_t + speed),
    ]
}

/// Pitch and roll that minimize `q_x a_x + q_y a_y`; exact ties pick the
/// hover input.
fn planar_argmin(bounds: &TrackerBounds, qx: f64, qy: f64) -> (f64, f64) {
    const TIE: f64 = 1e-12;
    // a_x = g cos(pitch) decreases with pitch on [0, pi].
    let pitch = if qx > TIE {
        bounds.pitch.hi
    } else if qx < -TIE {
        bounds.pitch.lo
    } else {
        bounds.pitch.clamp(PI / 2.0)
    };
    // a_y = -g sin(roll) decreases with roll on [-pi/2, pi/2].
    let roll = if qy > TIE {
        bounds.roll.hi
    } else if qy < -TIE {
        bounds.roll.lo
    } else {
        bounds.roll.clamp(0.0)
    };
    (pitch, roll)
}

/// Pitch and roll minimizing the numerical Hamiltonian at `r` for the actual
/// planner heading. Queries outside the grid are clamped onto it. Thrust is
/// left at hover; see [`optimal_vertical_thrust`].
pub fn optimal_tracking_control(
    grid: &ValueGrid,
    bounds: &TrackerBounds,
    gravity: f64,
    r: &RelativeState,
    theta: f64,
) -> TrackerControl {
    let x = clamp_to_grid(grid, r);
    let g = grid.gradient(&x);
    let p = [g[0], g[1], g[2], g[3]];
    let (qx, qy) = PlanarGame::accel_weights(&p, theta.cos(), theta.sin());
    let (pitch, roll) = planar_argmin(bounds, qx, qy);
    TrackerControl {
        pitch,
        roll,
        thrust: bounds.thrust.clamp(gravity),
    }
}

/// Thrust minimizing the vertical Hamiltonian at relative height `z` and
/// vertical speed `vz`.
pub fn optimal_vertical_thrust(grid: &ValueGrid, bounds: &TrackerBounds, gravity: f64, z: f64, vz: f64) -> f64 {
    let g = grid.gradient(&[z, vz]);
    if g[1] > 1e-12 {
        bounds.thrust.lo
    } else if g[1] < -1e-12 {
        bounds.thrust.hi
    } else {
        bounds.thrust.clamp(gravity)
    }
}

fn clamp_to_grid(grid: &ValueGrid, r: &RelativeState) -> Vec<f64> {
    let mut x = r.to_array().to_vec();
    let mut clamped = false;
    for (d, ax) in grid.axes.iter().enumerate() {
        let (lo, hi) = match ax.kind {
            AxisKind::Clamped => (ax.min, ax.max),
            AxisKind::Radial { .. } => (0.0, ax.node(ax.count - 1)),
            AxisKind::Periodic => continue,
        };
        if x[d] < lo || x[d] > hi {
            x[d] = x[d].clamp(lo, hi);
            clamped = true;
        }
    }
    if clamped {
        log::warn!("relative state {r:?} outside the value grid; clamped");
    }
    x
}
