//! Scenario files: TOML with one section per subsystem.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Interval, PlannerParams, PlannerState, TrackerBounds};
use crate::error::{Error, Result};
use crate::meta_graph::GraphParams;
use crate::reachability::{GridSpec, RolloutOptions, SolverOptions, TrackingParams, ZGridSpec};
use crate::world::{Bounds, Circle, Environment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub environment: EnvironmentConfig,
    pub vehicle: VehicleConfig,
    pub sensing: SensingConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub hj: HjConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub termination: TerminationConfig,
}

/// Row of equally spaced circular obstacles from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub radius: f64,
    pub spacing: f64,
}

/// `count` circles evenly spaced on a ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingConfig {
    pub center: [f64; 2],
    pub ring_radius: f64,
    pub radius: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    /// `[[x_min, y_min], [x_max, y_max]]`.
    pub bounds: [[f64; 2]; 2],
    /// `[x, y, theta]`.
    pub home: [f64; 3],
    pub goal: [f64; 3],
    /// `[x, y, radius]` per obstacle.
    #[serde(default)]
    pub obstacles: Vec<[f64; 3]>,
    #[serde(default)]
    pub walls: Vec<WallConfig>,
    #[serde(default)]
    pub rings: Vec<RingConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub speed: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    pub turn_rate: [f64; 2],
    pub pitch: [f64; 2],
    pub roll: [f64; 2],
    pub thrust: [f64; 2],
    pub robot_radius: f64,
    pub flight_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingConfig {
    pub range: f64,
    /// A sensing disc is kept only if it adds more than a rim this wide [m].
    #[serde(default = "default_min_gain")]
    pub min_gain: f64,
}

fn default_min_gain() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Sample spacing of planned trajectories [s].
    pub dt: f64,
    pub k: usize,
    /// Heading weight of the neighbour metric; the turning radius if unset.
    pub heading_weight: Option<f64>,
    pub epsilon: f64,
    pub replan_period: f64,
    pub seed: u64,
    /// Poses in the optimistic baseline's roadmap.
    pub baseline_roadmap: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            k: 5,
            heading_weight: None,
            epsilon: 0.1,
            replan_period: 2.0,
            seed: 0,
            baseline_roadmap: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HjConfig {
    pub d_max: f64,
    pub d_count: usize,
    pub psi_count: usize,
    /// Half-width of the relative velocity axes; twice the speed if unset.
    pub v_max: Option<f64>,
    pub v_count: usize,
    pub z_max: f64,
    pub z_count: usize,
    pub vz_max: f64,
    pub vz_count: usize,
    pub residual_tol: f64,
    pub max_sweeps: usize,
    pub cfl: f64,
    pub level_check_rollouts: usize,
    /// Value grid cache; relative paths are taken from the scenario file's directory.
    pub cache: Option<PathBuf>,
}

impl Default for HjConfig {
    fn default() -> Self {
        let grid = GridSpec::default_for_speed(1.0);
        let z = ZGridSpec::default();
        let solver = SolverOptions::default();
        Self {
            d_max: grid.d_max,
            d_count: grid.d_count,
            psi_count: grid.psi_count,
            v_max: None,
            v_count: grid.v_count,
            z_max: z.z_max,
            z_count: z.z_count,
            vz_max: z.vz_max,
            vz_count: z.vz_count,
            residual_tol: solver.residual_tol,
            max_sweeps: solver.max_sweeps,
            cfl: solver.cfl,
            level_check_rollouts: RolloutOptions::default().count,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    /// Tick length [s].
    pub tick: f64,
    /// Tracker integration steps per tick.
    pub substeps: usize,
    pub expansions_per_tick: usize,
    /// Uniform draws per expansion until one has a FREE footprint.
    pub draws_per_expansion: usize,
    pub consolidations_per_tick: usize,
    /// When set, the per-tick order of graph tasks is shuffled with this seed.
    pub shuffle_seed: Option<u64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            tick: 0.1,
            substeps: 10,
            expansions_per_tick: 1,
            draws_per_expansion: 50,
            consolidations_per_tick: 5,
            shuffle_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminationConfig {
    pub max_ticks: usize,
    /// Planar distance to the goal counted as arrival; the planar tracking
    /// tolerance if unset.
    pub goal_tolerance: Option<f64>,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        Self {
            max_ticks: 3000,
            goal_tolerance: None,
        }
    }
}

fn default_gravity() -> f64 {
    9.81
}

fn interval(name: &str, v: [f64; 2]) -> Result<Interval> {
    Interval::new(v[0], v[1]).map_err(|e| Error::Config(format!("{name}: {e}")))
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {x}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a scenario file, resolving a relative cache path against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(cache) = &cfg.hj.cache {
            if cache.is_relative() {
                let dir = path.parent().unwrap_or(Path::new("."));
                cfg.hj.cache = Some(dir.join(cache));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.vehicle;
        positive("vehicle.speed", v.speed)?;
        positive("vehicle.gravity", v.gravity)?;
        positive("vehicle.robot_radius", v.robot_radius)?;
        positive("vehicle.flight_height", v.flight_height)?;
        positive("sensing.range", self.sensing.range)?;
        if !(0.0..self.sensing.range).contains(&self.sensing.min_gain) {
            return Err(Error::Config(format!(
                "sensing.min_gain must lie in [0, range), got {}",
                self.sensing.min_gain
            )));
        }
        positive("planner.dt", self.planner.dt)?;
        positive("planner.replan_period", self.planner.replan_period)?;
        positive("schedule.tick", self.schedule.tick)?;
        if self.schedule.substeps == 0 || self.planner.k == 0 {
            return Err(Error::Config("schedule.substeps and planner.k must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.planner.epsilon) {
            return Err(Error::Config(format!("planner.epsilon must lie in [0, 1], got {}", self.planner.epsilon)));
        }
        self.planner_params()?;
        self.tracker_bounds()?.validate(v.gravity).map_err(|e| Error::Config(e.to_string()))?;
        self.tracking_params()?.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.environment()?;
        for w in &self.environment.walls {
            positive("wall radius", w.radius)?;
            positive("wall spacing", w.spacing)?;
        }
        Ok(())
    }

    pub fn planner_params(&self) -> Result<PlannerParams> {
        PlannerParams::new(self.vehicle.speed, interval("vehicle.turn_rate", self.vehicle.turn_rate)?)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn tracker_bounds(&self) -> Result<TrackerBounds> {
        let v = &self.vehicle;
        Ok(TrackerBounds {
            pitch: interval("vehicle.pitch", v.pitch)?,
            roll: interval("vehicle.roll", v.roll)?,
            thrust: interval("vehicle.thrust", v.thrust)?,
        })
    }

    pub fn tracking_params(&self) -> Result<TrackingParams> {
        let h = &self.hj;
        let v = &self.vehicle;
        Ok(TrackingParams {
            speed: v.speed,
            turn_rate: interval("vehicle.turn_rate", v.turn_rate)?,
            bounds: self.tracker_bounds()?,
            gravity: v.gravity,
            grid: GridSpec {
                d_max: h.d_max,
                d_count: h.d_count,
                psi_count: h.psi_count,
                v_max: h.v_max.unwrap_or(2.0 * v.speed),
                v_count: h.v_count,
            },
            z_grid: ZGridSpec {
                z_max: h.z_max,
                z_count: h.z_count,
                vz_max: h.vz_max,
                vz_count: h.vz_count,
            },
            solver: SolverOptions {
                residual_tol: h.residual_tol,
                max_sweeps: h.max_sweeps,
                cfl: h.cfl,
            },
            level_check: RolloutOptions {
                count: h.level_check_rollouts,
                ..RolloutOptions::default()
            },
        })
    }

    pub fn graph_params(&self) -> Result<GraphParams> {
        let pp = self.planner_params()?;
        let radius = pp.turn_radius();
        Ok(GraphParams {
            speed: pp.speed,
            turn_radius: radius,
            dt: self.planner.dt,
            k: self.planner.k,
            heading_weight: self.planner.heading_weight.unwrap_or(radius),
        })
    }

    /// Environment with walls and rings expanded into circles.
    pub fn environment(&self) -> Result<Environment> {
        let e = &self.environment;
        let bounds = Bounds::new(e.bounds[0], e.bounds[1]).map_err(|e| Error::Config(e.to_string()))?;
        let mut obstacles: Vec<Circle> = e.obstacles.iter().map(|o| Circle::new([o[0], o[1]], o[2])).collect();
        for w in &e.walls {
            let len = (w.to[0] - w.from[0]).hypot(w.to[1] - w.from[1]);
            let n = (len / w.spacing).ceil().max(1.0) as usize;
            for i in 0..=n {
                let s = i as f64 / n as f64;
                obstacles.push(Circle::new(
                    [w.from[0] + s * (w.to[0] - w.from[0]), w.from[1] + s * (w.to[1] - w.from[1])],
                    w.radius,
                ));
            }
        }
        for r in &e.rings {
            for i in 0..r.count {
                let a = std::f64::consts::TAU * i as f64 / r.count as f64;
                obstacles.push(Circle::new(
                    [r.center[0] + r.ring_radius * a.cos(), r.center[1] + r.ring_radius * a.sin()],
                    r.radius,
                ));
            }
        }
        let env = Environment {
            bounds,
            obstacles,
            home: PlannerState::new(e.home[0], e.home[1], e.home[2]),
            goal: PlannerState::new(e.goal[0], e.goal[1], e.goal[2]),
        };
        env.validate(self.vehicle.robot_radius)?;
        Ok(env)
    }
}
