//! Planning model (constant-speed Dubins car), tracking model (near-hover
//! quadrotor), numerical integration and timed reference trajectories.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod dubins;

pub use dubins::{dubins_connect, DubinsPath, DubinsWord};

/// Position tolerance [m] for deciding that two planner states coincide.
pub const STATE_MATCH_POS_TOL: f64 = 1e-6;
/// Heading tolerance [rad] for deciding that two planner states coincide.
pub const STATE_MATCH_ANGLE_TOL: f64 = 1e-6;

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::NonFinite("interval"));
        }
        if lo > hi {
            return Err(Error::InvalidInput(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PlannerState {
    /// Builds a state with the heading wrapped into (-pi, pi].
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn planar_distance(&self, other: &PlannerState) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// True when both states agree within the state-matching tolerances.
    pub fn matches(&self, other: &PlannerState) -> bool {
        self.planar_distance(other) <= STATE_MATCH_POS_TOL
            && wrap_angle(self.theta - other.theta).abs() <= STATE_MATCH_ANGLE_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerControl {
    /// Turning rate [rad/s].
    pub turn_rate: f64,
}

impl PlannerControl {
    pub const STRAIGHT: PlannerControl = PlannerControl { turn_rate: 0.0 };

    pub fn new(turn_rate: f64) -> Self {
        Self { turn_rate }
    }
}

/// Parameters of the planning model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    /// Constant tangential speed [m/s].
    pub speed: f64,
    /// Turn-rate bounds [rad/s], lo < 0 < hi.
    pub turn_rate: Interval,
}

impl PlannerParams {
    pub fn new(speed: f64, turn_rate: Interval) -> Result<Self> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::InvalidInput(format!("planner speed must be positive, got {speed}")));
        }
        if !(turn_rate.lo < 0.0 && turn_rate.hi > 0.0) {
            return Err(Error::InvalidInput(
                "turn-rate interval must contain zero strictly".into(),
            ));
        }
        Ok(Self { speed, turn_rate })
    }

    /// Largest admissible turning-rate magnitude.
    pub fn max_turn_rate(&self) -> f64 {
        self.turn_rate.max_abs()
    }

    /// Minimum turning radius usable in both directions.
    pub fn turn_radius(&self) -> f64 {
        self.speed / self.turn_rate.lo.abs().min(self.turn_rate.hi)
    }
}

/// Time derivative of the planning model `(v cos θ, v sin θ, c)`.
pub fn planner_derivative(p: &PlannerState, c: PlannerControl, speed: f64) -> [f64; 3] {
    [speed * p.theta.cos(), speed * p.theta.sin(), c.turn_rate]
}

/// Exact flow of the planning model under a constant turn rate for `dt` seconds.
pub fn propagate_planner(p: &PlannerState, c: PlannerControl, speed: f64, dt: f64) -> PlannerState {
    let w = c.turn_rate;
    if w.abs() < 1e-12 {
        PlannerState::new(
            p.x + speed * dt * p.theta.cos(),
            p.y + speed * dt * p.theta.sin(),
            p.theta,
        )
    } else {
        let th1 = p.theta + w * dt;
        let r = speed / w;
        PlannerState::new(
            p.x + r * (th1.sin() - p.theta.sin()),
            p.y - r * (th1.cos() - p.theta.cos()),
            th1,
        )
    }
}

/// Piecewise-constant control signal; the last piece is held past its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    /// `(duration [s], control)` pieces in order.
    pub pieces: Vec<(f64, PlannerControl)>,
}

impl ControlSignal {
    pub fn constant(c: PlannerControl) -> Self {
        Self {
            pieces: vec![(f64::INFINITY, c)],
        }
    }

    fn at(&self, elapsed: f64) -> (PlannerControl, f64) {
        let mut start = 0.0;
        for (dur, c) in &self.pieces {
            let end = start + dur;
            if elapsed < end {
                return (*c, end);
            }
            start = end;
        }
        let last = self
            .pieces
            .last()
            .map(|p| p.1)
            .unwrap_or(PlannerControl::STRAIGHT);
        (last, f64::INFINITY)
    }
}

/// Fixed-step RK4 integration of the planning model starting at time `t0`.
///
/// Steps never straddle a control switch, so every sample interval has a
/// constant control.
pub fn integrate_planner(
    p0: PlannerState,
    signal: &ControlSignal,
    dt: f64,
    horizon: f64,
    speed: f64,
    t0: f64,
) -> Result<Trajectory> {
    if !p0.is_finite() || !dt.is_finite() || !horizon.is_finite() || !speed.is_finite() || !t0.is_finite() {
        return Err(Error::NonFinite("integrate_planner input"));
    }
    if signal
        .pieces
        .iter()
        .any(|(d, c)| d.is_nan() || !c.turn_rate.is_finite())
    {
        return Err(Error::NonFinite("control signal"));
    }
    if dt <= 0.0 || horizon < 0.0 {
        return Err(Error::InvalidInput(format!(
            "need dt > 0 and horizon >= 0, got dt={dt}, horizon={horizon}"
        )));
    }

    let mut samples = Vec::with_capacity((horizon / dt).ceil() as usize + 2);
    let mut elapsed = 0.0;
    let mut state = p0;
    loop {
        let (c, switch_at) = signal.at(elapsed);
        samples.push(TrajectorySample {
            time: t0 + elapsed,
            state,
            control: c,
        });
        if elapsed >= horizon {
            break;
        }
        let mut next = (elapsed + dt).min(switch_at).min(horizon);
        // Avoid sliver steps caused by rounding.
        if horizon - next < 1e-12 * dt.max(1.0) {
            next = horizon;
        }
        let h = next - elapsed;
        state = rk4_planner(&state, c, speed, h);
        elapsed = next;
    }

    Ok(Trajectory {
        speed,
        samples,
        terminal: Terminal::Open,
        legs: Vec::new(),
    })
}

fn rk4_planner(p: &PlannerState, c: PlannerControl, speed: f64, h: f64) -> PlannerState {
    let f = |s: [f64; 3]| {
        planner_derivative(
            &PlannerState {
                x: s[0],
                y: s[1],
                theta: s[2],
            },
            c,
            speed,
        )
    };
    let s0 = [p.x, p.y, p.theta];
    let k1 = f(s0);
    let k2 = f(axpy(&s0, h / 2.0, &k1));
    let k3 = f(axpy(&s0, h / 2.0, &k2));
    let k4 = f(axpy(&s0, h, &k3));
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = s0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    PlannerState::new(out[0], out[1], out[2])
}

fn axpy<const N: usize>(x: &[f64; N], a: f64, y: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += a * y[i];
    }
    out
}

/// Six-dimensional near-hover quadrotor state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl TrackerState {
    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.z, self.vx, self.vy, self.vz]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Tracker at rest-relative to a planner state: same position, velocity `v` along heading.
    pub fn aligned_with(p: &PlannerState, z: f64, speed: f64) -> Self {
        Self {
            x: p.x,
            y: p.y,
            z,
            vx: speed * p.theta.cos(),
            vy: speed * p.theta.sin(),
            vz: 0.0,
        }
    }

    fn to_array(self) -> [f64; 6] {
        [self.x, self.vx, self.y, self.vy, self.z, self.vz]
    }

    fn from_array(a: [f64; 6]) -> Self {
        Self {
            x: a[0],
            vx: a[1],
            y: a[2],
            vy: a[3],
            z: a[4],
            vz: a[5],
        }
    }
}

/// Pitch, roll and thrust acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerControl {
    pub pitch: f64,
    pub roll: f64,
    pub thrust: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerBounds {
    pub pitch: Interval,
    pub roll: Interval,
    pub thrust: Interval,
}

impl TrackerBounds {
    /// Pitch must stay within [0, pi] and roll within [-pi/2, pi/2] so that the
    /// accelerations are monotone in the inputs; pitch must bracket the hover
    /// input pi/2 and thrust must bracket `gravity`.
    pub fn validate(&self, gravity: f64) -> Result<()> {
        let pi2 = PI / 2.0;
        if !(self.pitch.lo >= 0.0 && self.pitch.hi <= PI && self.pitch.contains(pi2)) {
            return Err(Error::InvalidInput(format!(
                "pitch interval [{}, {}] must lie in [0, pi] and contain pi/2",
                self.pitch.lo, self.pitch.hi
            )));
        }
        if !(self.roll.lo >= -pi2 && self.roll.hi <= pi2 && self.roll.contains(0.0)) {
            return Err(Error::InvalidInput(format!(
                "roll interval [{}, {}] must lie in [-pi/2, pi/2] and contain 0",
                self.roll.lo, self.roll.hi
            )));
        }
        if !self.thrust.contains(gravity) {
            return Err(Error::InvalidInput(format!(
                "thrust interval [{}, {}] cannot hover at g={gravity}",
                self.thrust.lo, self.thrust.hi
            )));
        }
        Ok(())
    }

    pub fn contains(&self, u: &TrackerControl) -> bool {
        self.pitch.contains(u.pitch) && self.roll.contains(u.roll) && self.thrust.contains(u.thrust)
    }

    /// Range of x-acceleration `g cos(pitch)` reachable under the pitch bounds.
    pub fn accel_x(&self, gravity: f64) -> Interval {
        Interval {
            lo: gravity * self.pitch.hi.cos(),
            hi: gravity * self.pitch.lo.cos(),
        }
    }

    /// Range of y-acceleration `-g sin(roll)` reachable under the roll bounds.
    pub fn accel_y(&self, gravity: f64) -> Interval {
        Interval {
            lo: -gravity * self.roll.hi.sin(),
            hi: -gravity * self.roll.lo.sin(),
        }
    }

    pub fn hover(&self, gravity: f64) -> TrackerControl {
        TrackerControl {
            pitch: self.pitch.clamp(PI / 2.0),
            roll: self.roll.clamp(0.0),
            thrust: self.thrust.clamp(gravity),
        }
    }
}

/// Time derivative of the tracking model in the order
/// `(x, vx, y, vy, z, vz)`:
/// `(vx, g cos u1, vy, -g sin u2, vz, u3 - g)`.
pub fn tracker_derivative(s: &TrackerState, u: &TrackerControl, gravity: f64) -> [f64; 6] {
    [
        s.vx,
        gravity * u.pitch.cos(),
        s.vy,
        -gravity * u.roll.sin(),
        s.vz,
        u.thrust - gravity,
    ]
}

/// One RK4 step of the tracking model with the control held constant.
pub fn step_tracker(s: &TrackerState, u: &TrackerControl, gravity: f64, dt: f64) -> TrackerState {
    let f = |a: [f64; 6]| tracker_derivative(&TrackerState::from_array(a), u, gravity);
    let s0 = s.to_array();
    let k1 = f(s0);
    let k2 = f(axpy(&s0, dt / 2.0, &k1));
    let k3 = f(axpy(&s0, dt / 2.0, &k2));
    let k4 = f(axpy(&s0, dt, &k3));
    let mut out = [0.0; 6];
    for i in 0..6 {
        out[i] = s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    TrackerState::from_array(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    pub state: PlannerState,
    /// Control applied from this sample until the next one.
    pub control: PlannerControl,
}

/// How a trajectory ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    /// Plain segment with no terminal guarantee (edge pieces, raw integration).
    Open,
    /// Ends at the goal state.
    Goal,
    /// Samples from `cycle_start` to the end form a loop through home that
    /// repeats forever.
    HomeCycle { cycle_start: usize },
}

/// A stretch of a trajectory that follows one graph edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leg {
    pub from_vertex: usize,
    pub to_vertex: usize,
    pub start_index: usize,
    pub end_index: usize,
}

/// Timed reference path of the planning model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub speed: f64,
    pub samples: Vec<TrajectorySample>,
    pub terminal: Terminal,
    pub legs: Vec<Leg>,
}

impl Trajectory {
    pub fn start_time(&self) -> f64 {
        self.samples.first().map(|s| s.time).unwrap_or(0.0)
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map(|s| s.time).unwrap_or(0.0)
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn first_state(&self) -> PlannerState {
        self.samples[0].state
    }

    pub fn last_state(&self) -> PlannerState {
        self.samples[self.samples.len() - 1].state
    }

    pub fn cycle_start(&self) -> Option<usize> {
        match self.terminal {
            Terminal::HomeCycle { cycle_start } => Some(cycle_start),
            _ => None,
        }
    }

    /// Length of the repeating tail, if any.
    pub fn cycle_period(&self) -> Option<f64> {
        self.cycle_start()
            .map(|i| self.end_time() - self.samples[i].time)
    }

    /// Maps an absolute time onto the stored samples, folding times past the
    /// end of a home cycle back into the loop.
    pub fn fold_time(&self, t: f64) -> f64 {
        let end = self.end_time();
        match (self.cycle_start(), self.cycle_period()) {
            (Some(i), Some(period)) if t > end && period > 0.0 => {
                let t0 = self.samples[i].time;
                t0 + (t - t0).rem_euclid(period)
            }
            _ => t,
        }
    }

    /// Index of the last sample with time <= t (after folding), clamped to the range.
    pub fn index_at(&self, t: f64) -> usize {
        let t = self.fold_time(t);
        let idx = self.samples.partition_point(|s| s.time <= t);
        idx.saturating_sub(1)
    }

    /// Reference state at time `t`, propagated exactly from the preceding sample.
    pub fn state_at(&self, t: f64) -> PlannerState {
        let tf = self.fold_time(t);
        let i = self.index_at(tf);
        let s = &self.samples[i];
        if i + 1 >= self.samples.len() || tf <= s.time {
            return s.state;
        }
        propagate_planner(&s.state, s.control, self.speed, tf - s.time)
    }

    pub fn control_at(&self, t: f64) -> PlannerControl {
        self.samples[self.index_at(t)].control
    }

    /// Largest time gap between consecutive samples.
    pub fn max_spacing(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[1].time - w[0].time)
            .fold(0.0, f64::max)
    }

    /// Copy of the trajectory with all times shifted by `dt`.
    pub fn shifted(&self, dt: f64) -> Trajectory {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.time += dt;
        }
        out
    }

    /// Planar polyline taking every `stride`-th sample plus the last one.
    pub fn polyline(&self, stride: usize) -> Vec<[f64; 2]> {
        let stride = stride.max(1);
        let mut pts: Vec<[f64; 2]> = self
            .samples
            .iter()
            .step_by(stride)
            .map(|s| s.state.position())
            .collect();
        if (self.samples.len() - 1) % stride != 0 {
            pts.push(self.last_state().position());
        }
        pts
    }

    /// Checks time ordering, consistency of consecutive samples with the
    /// planning model, turn-rate bounds and, for home cycles, closure of the
    /// loop.
    pub fn validate(&self, max_turn_rate: f64, tol: f64) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Invariant("empty trajectory".into()));
        }
        for w in self.samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if !(b.time > a.time) {
                return Err(Error::Invariant(format!(
                    "sample times not strictly increasing at t={}",
                    a.time
                )));
            }
            let pred = propagate_planner(&a.state, a.control, self.speed, b.time - a.time);
            let err = pred.planar_distance(&b.state) + wrap_angle(pred.theta - b.state.theta).abs();
            if err > tol {
                return Err(Error::Invariant(format!(
                    "samples at t={} and t={} disagree with the planning model by {err:.3e}",
                    a.time, b.time
                )));
            }
        }
        for s in &self.samples {
            if s.control.turn_rate.abs() > max_turn_rate + 1e-9 {
                return Err(Error::Invariant(format!(
                    "turn rate {} exceeds bound {max_turn_rate}",
                    s.control.turn_rate
                )));
            }
        }
        if let Some(i) = self.cycle_start() {
            if i >= self.samples.len() {
                return Err(Error::Invariant("cycle start out of range".into()));
            }
            let a = self.samples[i].state;
            let b = self.last_state();
            if !a.matches(&b) {
                return Err(Error::Invariant(format!(
                    "home cycle does not close: start {a:?}, end {b:?}"
                )));
            }
        }
        Ok(())
    }
}
