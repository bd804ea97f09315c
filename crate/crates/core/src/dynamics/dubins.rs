//! Analytic shortest paths for the constant-speed, bounded-turn-rate car.
//!
//! Every shortest path is one of six three-segment words built from left
//! arcs (L), right arcs (R) and straight lines (S). Segment lengths are kept
//! normalized by the turning radius.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{propagate_planner, PlannerControl, PlannerState, Terminal, Trajectory, TrajectorySample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DubinsWord {
    Lsl,
    Rsr,
    Lsr,
    Rsl,
    Rlr,
    Lrl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Seg {
    L,
    S,
    R,
}

impl DubinsWord {
    pub const ALL: [DubinsWord; 6] = [
        DubinsWord::Lsl,
        DubinsWord::Rsr,
        DubinsWord::Lsr,
        DubinsWord::Rsl,
        DubinsWord::Rlr,
        DubinsWord::Lrl,
    ];

    fn segments(self) -> [Seg; 3] {
        use Seg::*;
        match self {
            DubinsWord::Lsl => [L, S, L],
            DubinsWord::Rsr => [R, S, R],
            DubinsWord::Lsr => [L, S, R],
            DubinsWord::Rsl => [R, S, L],
            DubinsWord::Rlr => [R, L, R],
            DubinsWord::Lrl => [L, R, L],
        }
    }
}

fn mod2pi(a: f64) -> f64 {
    a.rem_euclid(TAU)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DubinsPath {
    pub start: PlannerState,
    pub radius: f64,
    pub word: DubinsWord,
    /// Segment lengths divided by the radius.
    pub params: [f64; 3],
}

/// Intermediate quantities shared by all words.
struct Frame {
    alpha: f64,
    beta: f64,
    d: f64,
    sa: f64,
    sb: f64,
    ca: f64,
    cb: f64,
}

impl Frame {
    fn new(from: &PlannerState, to: &PlannerState, radius: f64) -> Self {
        let dx = to.x - from.x;
        let dy = to.y - from.y;
        let d = dx.hypot(dy) / radius;
        let th = if d > 0.0 { mod2pi(dy.atan2(dx)) } else { 0.0 };
        let alpha = mod2pi(from.theta - th);
        let beta = mod2pi(to.theta - th);
        Self {
            alpha,
            beta,
            d,
            sa: alpha.sin(),
            sb: beta.sin(),
            ca: alpha.cos(),
            cb: beta.cos(),
        }
    }

    fn word(&self, word: DubinsWord) -> Option<[f64; 3]> {
        let Frame { alpha: a, beta: b, d, sa, sb, ca, cb } = *self;
        let cab = (a - b).cos();
        match word {
            DubinsWord::Lsl => {
                let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sa - sb);
                if p2 < 0.0 {
                    return None;
                }
                let tmp = (cb - ca).atan2(d + sa - sb);
                Some([mod2pi(tmp - a), p2.sqrt(), mod2pi(b - tmp)])
            }
            DubinsWord::Rsr => {
                let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sb - sa);
                if p2 < 0.0 {
                    return None;
                }
                let tmp = (ca - cb).atan2(d - sa + sb);
                Some([mod2pi(a - tmp), p2.sqrt(), mod2pi(tmp - b)])
            }
            DubinsWord::Lsr => {
                let p2 = -2.0 + d * d + 2.0 * cab + 2.0 * d * (sa + sb);
                if p2 < 0.0 {
                    return None;
                }
                let p = p2.sqrt();
                let tmp = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
                Some([mod2pi(tmp - a), p, mod2pi(tmp - b)])
            }
            DubinsWord::Rsl => {
                let p2 = -2.0 + d * d + 2.0 * cab - 2.0 * d * (sa + sb);
                if p2 < 0.0 {
                    return None;
                }
                let p = p2.sqrt();
                let tmp = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
                Some([mod2pi(a - tmp), p, mod2pi(b - tmp)])
            }
            DubinsWord::Rlr => {
                let tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0;
                if tmp.abs() > 1.0 {
                    return None;
                }
                let phi = (ca - cb).atan2(d - sa + sb);
                let p = mod2pi(TAU - tmp.acos());
                let t = mod2pi(a - phi + mod2pi(p / 2.0));
                Some([t, p, mod2pi(a - b - t + mod2pi(p))])
            }
            DubinsWord::Lrl => {
                let tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0;
                if tmp.abs() > 1.0 {
                    return None;
                }
                let phi = (ca - cb).atan2(d + sa - sb);
                let p = mod2pi(TAU - tmp.acos());
                let t = mod2pi(-a - phi + p / 2.0);
                Some([t, p, mod2pi(b - a - t + mod2pi(p))])
            }
        }
    }
}

impl DubinsPath {
    /// Every geometrically valid word between the two poses.
    pub fn candidates(from: &PlannerState, to: &PlannerState, radius: f64) -> Result<Vec<DubinsPath>> {
        check_inputs(from, to, radius)?;
        let frame = Frame::new(from, to, radius);
        Ok(DubinsWord::ALL
            .iter()
            .filter_map(|&w| {
                frame.word(w).map(|params| DubinsPath {
                    start: *from,
                    radius,
                    word: w,
                    params,
                })
            })
            .collect())
    }

    /// Shortest word, ties broken by the fixed word order.
    pub fn shortest(from: &PlannerState, to: &PlannerState, radius: f64) -> Result<Option<DubinsPath>> {
        let mut best: Option<DubinsPath> = None;
        for cand in Self::candidates(from, to, radius)? {
            if best.map_or(true, |b| cand.length() < b.length()) {
                best = Some(cand);
            }
        }
        Ok(best)
    }

    pub fn length(&self) -> f64 {
        (self.params[0] + self.params[1] + self.params[2]) * self.radius
    }

    /// Signed turn rates of the three segments at speed `v`.
    pub fn segment_controls(&self, speed: f64) -> [PlannerControl; 3] {
        let w = speed / self.radius;
        self.word.segments().map(|s| {
            PlannerControl::new(match s {
                Seg::L => w,
                Seg::S => 0.0,
                Seg::R => -w,
            })
        })
    }

    /// State after travelling arc length `s` along the path.
    pub fn state_at_length(&self, s: f64) -> PlannerState {
        let controls = self.segment_controls(1.0);
        let mut state = self.start;
        let mut remaining = s.max(0.0);
        for (k, c) in controls.iter().enumerate() {
            let seg_len = self.params[k] * self.radius;
            let step = remaining.min(seg_len);
            state = propagate_planner(&state, *c, 1.0, step);
            remaining -= step;
            if remaining <= 0.0 {
                break;
            }
        }
        state
    }

    pub fn end_state(&self) -> PlannerState {
        self.state_at_length(self.length())
    }

    /// Samples the path at spacing `dt` in time, starting at `t0`, inserting
    /// an extra sample at each segment switch so every interval has a single
    /// control.
    pub fn to_trajectory(&self, speed: f64, dt: f64, t0: f64, end: &PlannerState) -> Trajectory {
        let controls = self.segment_controls(speed);
        let mut samples = Vec::new();
        let mut state = self.start;
        let mut t = t0;
        for (k, c) in controls.iter().enumerate() {
            let seg_time = self.params[k] * self.radius / speed;
            if seg_time <= 1e-12 {
                continue;
            }
            let n = (seg_time / dt).ceil().max(1.0) as usize;
            let h = seg_time / n as f64;
            let seg_start = state;
            for i in 0..n {
                let st = if i == 0 {
                    seg_start
                } else {
                    propagate_planner(&seg_start, *c, speed, h * i as f64)
                };
                samples.push(TrajectorySample {
                    time: t + h * i as f64,
                    state: st,
                    control: *c,
                });
            }
            state = propagate_planner(&seg_start, *c, speed, seg_time);
            t += seg_time;
        }
        let last_control = samples.last().map(|s| s.control).unwrap_or(PlannerControl::STRAIGHT);
        // The analytic end pose agrees with `end` to rounding; store `end`
        // exactly so edge endpoints match their vertices.
        debug_assert!(state.planar_distance(end) < 1e-6 || samples.is_empty());
        samples.push(TrajectorySample {
            time: t,
            state: *end,
            control: last_control,
        });
        Trajectory {
            speed,
            samples,
            terminal: Terminal::Open,
            legs: Vec::new(),
        }
    }
}

fn check_inputs(from: &PlannerState, to: &PlannerState, radius: f64) -> Result<()> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidInput(format!("turning radius must be positive, got {radius}")));
    }
    if !from.is_finite() || !to.is_finite() {
        return Err(Error::NonFinite("dubins endpoint"));
    }
    Ok(())
}

/// Shortest bounded-curvature path between two poses, timed at constant
/// `speed` and sampled every `dt` seconds from `t0`.
///
/// Identical poses yield a single-sample, zero-length trajectory. `None` is
/// only returned if no word is valid, which cannot happen in the plane.
pub fn dubins_connect(
    from: &PlannerState,
    to: &PlannerState,
    radius: f64,
    speed: f64,
    dt: f64,
    t0: f64,
) -> Result<Option<Trajectory>> {
    check_inputs(from, to, radius)?;
    if !(speed > 0.0 && dt > 0.0) {
        return Err(Error::InvalidInput("speed and dt must be positive".into()));
    }
    if from.matches(to) {
        return Ok(Some(Trajectory {
            speed,
            samples: vec![TrajectorySample {
                time: t0,
                state: *from,
                control: PlannerControl::STRAIGHT,
            }],
            terminal: Terminal::Open,
            legs: Vec::new(),
        }));
    }
    Ok(DubinsPath::shortest(from, to, radius)?.map(|p| p.to_trajectory(speed, dt, t0, to)))
}
