//! Solved tracking model: both value grids, the chosen bound, the optimal
//! controller, and the Monte-Carlo invariance check used to pick the level.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::games::{PlanarGame, VerticalGame};
use super::grid::{Axis, ValueGrid};
use super::solver::{solve_game, SolverOptions};
use super::teb::{cell_variation, extract_teb, vertical_extent, TrackingBound};
use super::{optimal_tracking_control, optimal_vertical_thrust, relative_state, tracker_from_relative, RelativeState};
use crate::dynamics::{propagate_planner, step_tracker, Interval, PlannerControl, PlannerState, TrackerBounds, TrackerControl, TrackerState};
use crate::error::{Error, Result};

/// Planar grid layout over `(d, psi, v_T, v_N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d_max: f64,
    pub d_count: usize,
    /// Must be even.
    pub psi_count: usize,
    /// Velocity axes span `[-v_max, v_max]`.
    pub v_max: f64,
    pub v_count: usize,
}

impl GridSpec {
    /// 31 nodes per axis over `d <= 3` and `|v| <= 2 speed`, with 32 bearings
    /// so that the origin reflection lands on nodes.
    pub fn default_for_speed(speed: f64) -> Self {
        Self {
            d_max: 3.0,
            d_count: 31,
            psi_count: 32,
            v_max: 2.0 * speed,
            v_count: 31,
        }
    }

    pub fn axes(&self) -> [Axis; 4] {
        [
            Axis::radial(self.d_max, self.d_count, 1),
            Axis::periodic(-PI, PI, self.psi_count),
            Axis::clamped(-self.v_max, self.v_max, self.v_count),
            Axis::clamped(-self.v_max, self.v_max, self.v_count),
        ]
    }
}

/// Vertical grid layout over `(z, v_z)`; both axes symmetric about zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZGridSpec {
    pub z_max: f64,
    pub z_count: usize,
    pub vz_max: f64,
    pub vz_count: usize,
}

impl Default for ZGridSpec {
    fn default() -> Self {
        Self {
            z_max: 1.0,
            z_count: 41,
            vz_max: 2.0,
            vz_count: 41,
        }
    }
}

impl ZGridSpec {
    pub fn axes(&self) -> [Axis; 2] {
        [
            Axis::clamped(-self.z_max, self.z_max, self.z_count),
            Axis::clamped(-self.vz_max, self.vz_max, self.vz_count),
        ]
    }
}

/// Monte-Carlo closed-loop check settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutOptions {
    pub count: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self {
            count: 200,
            horizon: 4.0,
            dt: 0.01,
            seed: 0,
        }
    }
}

/// Everything the value functions depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingParams {
    pub speed: f64,
    pub turn_rate: Interval,
    pub bounds: TrackerBounds,
    pub gravity: f64,
    pub grid: GridSpec,
    pub z_grid: ZGridSpec,
    pub solver: SolverOptions,
    pub level_check: RolloutOptions,
}

impl TrackingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::InvalidInput(format!("speed must be positive, got {}", self.speed)));
        }
        if !(self.gravity > 0.0 && self.gravity.is_finite()) {
            return Err(Error::InvalidInput(format!("gravity must be positive, got {}", self.gravity)));
        }
        self.bounds.validate(self.gravity)?;
        if self.grid.psi_count % 2 != 0 {
            return Err(Error::InvalidInput("bearing axis needs an even node count".into()));
        }
        if self.z_grid.z_count % 2 == 0 || self.z_grid.vz_count % 2 == 0 {
            return Err(Error::InvalidInput("vertical axes need odd node counts so zero is a node".into()));
        }
        Ok(())
    }

    pub fn planar_game(&self) -> PlanarGame {
        PlanarGame::new(self.speed, self.turn_rate, &self.bounds, self.gravity, self.grid.d_max)
    }

    pub fn vertical_game(&self) -> VerticalGame {
        VerticalGame {
            accel: Interval {
                lo: self.bounds.thrust.lo - self.gravity,
                hi: self.bounds.thrust.hi - self.gravity,
            },
            z_max: self.z_grid.z_max,
        }
    }

    /// Hash of everything the planar value grid depends on.
    pub fn planar_key(&self) -> u64 {
        let b = &self.bounds;
        let text = format!(
            "planar|v={:e}|c={:e},{:e}|pitch={:e},{:e}|roll={:e},{:e}|g={:e}|grid={:?}|tol={:e}|cfl={:e}",
            self.speed,
            self.turn_rate.lo,
            self.turn_rate.hi,
            b.pitch.lo,
            b.pitch.hi,
            b.roll.lo,
            b.roll.hi,
            self.gravity,
            self.grid,
            self.solver.residual_tol,
            self.solver.cfl,
        );
        hash_key(&text)
    }

    pub fn vertical_key(&self) -> u64 {
        let text = format!(
            "vertical|thrust={:e},{:e}|g={:e}|grid={:?}|tol={:e}|cfl={:e}",
            self.bounds.thrust.lo, self.bounds.thrust.hi, self.gravity, self.z_grid, self.solver.residual_tol, self.solver.cfl,
        );
        hash_key(&text)
    }
}

fn hash_key(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Solves the planar game.
pub fn solve_value(params: &TrackingParams) -> Result<ValueGrid> {
    params.validate()?;
    let rep = solve_game(params.grid.axes(), &params.planar_game(), &params.solver, params.planar_key())?;
    log::info!("planar value converged after {} sweeps", rep.sweeps);
    Ok(rep.grid)
}

/// Solves the vertical game.
pub fn solve_vertical(params: &TrackingParams) -> Result<ValueGrid> {
    params.validate()?;
    let rep = solve_game(params.z_grid.axes(), &params.vertical_game(), &params.solver, params.vertical_key())?;
    Ok(rep.grid)
}

/// Vertical extent for a thrust interval: solves the `(z, v_z)` game and
/// reads off the largest `|z|` in the sublevel set of the origin value.
pub fn solve_z_subsystem(thrust: Interval, gravity: f64, z_grid: ZGridSpec, solver: &SolverOptions) -> Result<(ValueGrid, f64)> {
    if !thrust.contains(gravity) {
        return Err(Error::InvalidInput(format!(
            "thrust interval [{}, {}] cannot hover at g={gravity}",
            thrust.lo, thrust.hi
        )));
    }
    let game = VerticalGame {
        accel: Interval {
            lo: thrust.lo - gravity,
            hi: thrust.hi - gravity,
        },
        z_max: z_grid.z_max,
    };
    let grid = solve_game(z_grid.axes(), &game, solver, 0)?.grid;
    let level = grid.eval(&[0.0, 0.0]);
    let extent = vertical_extent(&grid, level)?;
    Ok((grid, extent))
}

const SAMPLE_ATTEMPTS: usize = 100_000;

/// Outcome of a batch of closed-loop game rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub rollouts: usize,
    /// Largest interpolated value seen along any rollout.
    pub max_value: f64,
    /// Largest planar distance seen along any rollout.
    pub max_distance: f64,
    /// Rollouts whose value exceeded the allowed level.
    pub failures: usize,
}

/// How the planning reference picks its turn rate during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Adversary {
    /// Fresh random endpoint every step.
    Flicker,
    /// Random endpoint held for random durations.
    Held,
    /// Endpoint maximizing the value one step ahead.
    Greedy,
}

/// Solved grids plus the selected bound.
#[derive(Debug, Clone)]
pub struct TrackingModel {
    pub params: TrackingParams,
    pub planar: ValueGrid,
    pub vertical: ValueGrid,
    pub bound: TrackingBound,
}

impl TrackingModel {
    /// Solves (or loads from `cache`) both grids and selects the level.
    pub fn build(params: TrackingParams, cache: Option<&Path>) -> Result<Self> {
        params.validate()?;
        let key = params.planar_key();
        let cached = cache
            .filter(|p| p.exists())
            .and_then(|p| match ValueGrid::load(p) {
                Ok(g) if g.params_key == key && g.dims() == 4 => Some(g),
                Ok(_) => {
                    log::info!("value cache {} is for other parameters; re-solving", p.display());
                    None
                }
                Err(e) => {
                    log::warn!("ignoring unreadable value cache {}: {e}", p.display());
                    None
                }
            });
        let planar = match cached {
            Some(g) => g,
            None => {
                let g = solve_value(&params)?;
                if let Some(p) = cache {
                    g.save(p)?;
                }
                g
            }
        };
        let vertical = solve_vertical(&params)?;
        Self::from_grids(params, planar, vertical)
    }

    /// Selects the bound for already solved grids.
    pub fn from_grids(params: TrackingParams, planar: ValueGrid, vertical: ValueGrid) -> Result<Self> {
        let z_level = vertical.eval(&[0.0, 0.0]);
        let z_extent = vertical_extent(&vertical, z_level)?;
        let z_cell_variation = cell_variation(&vertical, z_level);
        let mut model = Self {
            params,
            planar,
            vertical,
            bound: TrackingBound {
                radius: 0.0,
                z_extent,
                level: 0.0,
                z_level,
                cell_variation: 0.0,
                z_cell_variation,
            },
        };
        model.select_level()?;
        Ok(model)
    }

    /// Smallest level, starting at the value of perfect tracking and rising
    /// in half-cell steps, whose sublevel set passes the rollout check.
    fn select_level(&mut self) -> Result<()> {
        let cap = self.params.grid.d_max;
        let step = 0.5 * self.planar.axes[0].spacing();
        let mut level = self.planar.eval(&RelativeState::ORIGIN.to_array());
        let opts = self.params.level_check;
        while level < cap {
            if let Ok(bound) = self.bound_at(level) {
                self.bound = bound;
                let stats = self.rollouts(&opts);
                log::debug!("level {level:.4}: radius {:.4}, kappa {:.4}, {stats:?}", bound.radius, bound.cell_variation);
                if stats.failures == 0 {
                    log::info!(
                        "tracking bound: radius {:.4} m (level {level:.4}, cell variation {:.4}), z extent {:.4} m",
                        bound.radius,
                        bound.cell_variation,
                        bound.z_extent
                    );
                    return Ok(());
                }
            }
            level += step;
        }
        Err(Error::NoInvariantLevel(cap))
    }

    /// Bound for an explicit planar level, keeping the vertical part.
    pub fn bound_at(&self, level: f64) -> Result<TrackingBound> {
        Ok(TrackingBound {
            radius: extract_teb(&self.planar, level)?,
            level,
            cell_variation: cell_variation(&self.planar, level),
            ..self.bound
        })
    }

    pub fn with_bound(mut self, bound: TrackingBound) -> Self {
        self.bound = bound;
        self
    }

    /// Interpolated planar value; infinite outside the grid's radial range.
    pub fn value(&self, r: &RelativeState) -> f64 {
        let (_, top) = self.planar.axes[0].node_range();
        let v_max = self.params.grid.v_max;
        if r.d > top || r.v_t.abs() > v_max || r.v_n.abs() > v_max {
            return f64::INFINITY;
        }
        self.planar.eval(&r.to_array())
    }

    /// Full tracker control for the current tracker and planner states, with
    /// the planner holding height `z_ref`.
    pub fn control(&self, s: &TrackerState, p: &PlannerState, z_ref: f64) -> TrackerControl {
        let r = relative_state(s, p, self.params.speed);
        let mut u = optimal_tracking_control(&self.planar, &self.params.bounds, self.params.gravity, &r, p.theta);
        u.thrust = optimal_vertical_thrust(&self.vertical, &self.params.bounds, self.params.gravity, s.z - z_ref, s.vz);
        u
    }

    /// Uniform sample of the planar sublevel set at the current level by
    /// rejection within the bounding box of its nodes; `None` if the set is
    /// too thin to hit.
    pub fn sample_sublevel(&self, rng: &mut impl Rng) -> Option<RelativeState> {
        let level = self.bound.level;
        let v_max = self.params.grid.v_max;
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (flat, &v) in self.planar.values.iter().enumerate() {
            if v <= level {
                let c = self.planar.node_coords(&self.planar.unflatten(flat));
                for a in 0..2 {
                    lo[a] = lo[a].min(c[a + 2]);
                    hi[a] = hi[a].max(c[a + 2]);
                }
            }
        }
        let h = self.planar.axes[2].spacing();
        let lo = lo.map(|x| (x - h).max(-v_max));
        let hi = hi.map(|x| (x + h).min(v_max));
        if lo[0] > hi[0] {
            return None;
        }
        for _ in 0..SAMPLE_ATTEMPTS {
            let d = self.bound.radius * rng.gen::<f64>().sqrt();
            let r = RelativeState {
                d,
                psi: rng.gen_range(-PI..PI),
                v_t: rng.gen_range(lo[0]..=hi[0]),
                v_n: rng.gen_range(lo[1]..=hi[1]),
            };
            if self.value(&r) <= level {
                return Some(r);
            }
        }
        None
    }

    /// Two-body closed-loop rollouts from random starts inside the sublevel
    /// set. A rollout fails if the interpolated value ever exceeds
    /// `level + cell_variation`.
    pub fn rollouts(&self, opts: &RolloutOptions) -> RolloutStats {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let limit = self.bound.level + self.bound.cell_variation;
        let mut stats = RolloutStats {
            rollouts: opts.count,
            max_value: f64::NEG_INFINITY,
            max_distance: 0.0,
            failures: 0,
        };
        let steps = (opts.horizon / opts.dt).ceil() as usize;
        for k in 0..opts.count {
            let adversary = match k % 3 {
                0 => Adversary::Flicker,
                1 => Adversary::Held,
                _ => Adversary::Greedy,
            };
            let Some(start) = self.sample_sublevel(&mut rng) else {
                stats.failures = opts.count;
                break;
            };
            let theta0 = rng.gen_range(-PI..PI);
            let (max_v, max_d) = self.rollout(start, theta0, adversary, steps, opts.dt, &mut rng);
            stats.max_value = stats.max_value.max(max_v);
            stats.max_distance = stats.max_distance.max(max_d);
            if max_v > limit {
                stats.failures += 1;
            }
        }
        stats
    }

    fn rollout(
        &self,
        start: RelativeState,
        theta0: f64,
        adversary: Adversary,
        steps: usize,
        dt: f64,
        rng: &mut impl Rng,
    ) -> (f64, f64) {
        let v = self.params.speed;
        let g = self.params.gravity;
        let turn = self.params.turn_rate;
        let mut p = PlannerState::new(0.0, 0.0, theta0);
        let mut s = tracker_from_relative(&p, &start, v, 0.0, 0.0);
        let mut max_v = self.value(&start);
        let mut max_d = start.d;
        let pick = |rng: &mut dyn rand::RngCore| if rng.gen_bool(0.5) { turn.lo } else { turn.hi };
        let mut held = pick(rng);
        let mut hold_left = 0.0;
        for _ in 0..steps {
            let u = self.control(&s, &p, 0.0);
            let c = match adversary {
                Adversary::Flicker => pick(rng),
                Adversary::Held => {
                    if hold_left <= 0.0 {
                        held = pick(rng);
                        hold_left = rng.gen_range(0.2..2.0);
                    }
                    hold_left -= dt;
                    held
                }
                Adversary::Greedy => {
                    let s1 = step_tracker(&s, &u, g, dt);
                    let score = |c: f64| {
                        let p1 = propagate_planner(&p, PlannerControl::new(c), v, dt);
                        self.value(&relative_state(&s1, &p1, v))
                    };
                    if score(turn.hi) > score(turn.lo) {
                        turn.hi
                    } else {
                        turn.lo
                    }
                }
            };
            s = step_tracker(&s, &u, g, dt);
            p = propagate_planner(&p, PlannerControl::new(c), v, dt);
            let r = relative_state(&s, &p, v);
            max_v = max_v.max(self.value(&r));
            max_d = max_d.max(r.d);
            if !max_v.is_finite() {
                break;
            }
        }
        (max_v, max_d)
    }
}
