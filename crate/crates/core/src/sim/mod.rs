//! Deterministic closed-loop runs. Each tick the tracker follows the current
//! reference, senses, the graph grows, and a new reference may be requested.

mod baseline;
pub mod config;
pub mod log;
pub mod plots;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::ScenarioConfig;
pub use log::{LogHeader, ObstacleRecord, Outcome, Record, RunLog, ViolationKind};

use crate::dynamics::{step_tracker, PlannerState, Terminal, TrackerState, Trajectory};
use crate::error::{Error, Result};
use crate::explorer::{
    initial_trajectory, reached_vertices, request_trajectory, verify_response, ExplorationPolicy, PlanResponse,
    ResponseKind,
};
use crate::meta_graph::{sample_candidate, EdgeRecord, ReachGraph};
use crate::reachability::{relative_state, velocity_min_projection, TrackingModel};
use crate::world::{Environment, KnowledgeMap, RobustFootprint};

const POLYLINE_STRIDE: usize = 5;
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Viable trajectories from the reachability graphs.
    Framework,
    /// Shortest paths that treat unknown space as free.
    Optimistic,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Framework => "framework",
            Mode::Optimistic => "optimistic",
        }
    }
}

/// Solves (or loads from the configured cache) the tracking model.
pub fn build_model(cfg: &ScenarioConfig) -> Result<TrackingModel> {
    TrackingModel::build(cfg.tracking_params()?, cfg.hj.cache.as_deref())
}

/// A response as issued, with the reference it started from and the map it
/// was checked against.
#[derive(Debug, Clone)]
pub struct IssuedResponse {
    pub response: PlanResponse,
    pub reference: PlannerState,
    pub map: KnowledgeMap,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub outcome: Outcome,
    pub ticks: usize,
    pub end_time: f64,
    pub log: RunLog,
    /// Framework responses in issue order, including the initial one.
    pub responses: Vec<IssuedResponse>,
    pub graph: Option<ReachGraph>,
    pub map: KnowledgeMap,
    pub environment: Environment,
    pub footprint: RobustFootprint,
    /// Largest planar tracker-reference distance over all substeps.
    pub max_distance: f64,
    pub max_z_error: f64,
}

impl RunOutcome {
    pub fn violations(&self) -> Vec<(ViolationKind, &str)> {
        self.log
            .records
            .iter()
            .filter_map(|r| match r {
                Record::Violation { kind, detail, .. } => Some((*kind, detail.as_str())),
                _ => None,
            })
            .collect()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations().iter().filter(|(k, _)| *k == kind).count()
    }
}

/// Builds the model and runs the scenario.
pub fn run(cfg: &ScenarioConfig, mode: Mode) -> Result<RunOutcome> {
    let model = build_model(cfg)?;
    run_with_model(cfg, &model, mode)
}

/// Runs with the framework planner.
pub fn run_framework(cfg: &ScenarioConfig, model: &TrackingModel) -> Result<RunOutcome> {
    run_with_model(cfg, model, Mode::Framework)
}

/// Runs with the optimistic baseline planner.
pub fn run_baseline_optimistic(cfg: &ScenarioConfig, model: &TrackingModel) -> Result<RunOutcome> {
    run_with_model(cfg, model, Mode::Optimistic)
}

/// Runs a scenario with an already built model, which must match the
/// scenario's tracking parameters.
pub fn run_with_model(cfg: &ScenarioConfig, model: &TrackingModel, mode: Mode) -> Result<RunOutcome> {
    cfg.validate()?;
    if model.params != cfg.tracking_params()? {
        return Err(Error::Config("tracking model was built for other parameters".into()));
    }
    Sim::new(cfg, model, mode)?.run()
}

enum Planner {
    Framework(Framework),
    Optimistic(baseline::Optimistic),
}

struct Framework {
    graph: ReachGraph,
    policy: ExplorationPolicy,
    sample_rng: ChaCha8Rng,
    shuffle_rng: Option<ChaCha8Rng>,
    consolidate_cursor: usize,
    next_request: f64,
    target_time: Option<f64>,
    responses: Vec<IssuedResponse>,
}

#[derive(Clone, Copy)]
enum Task {
    Goal,
    Expand,
    Consolidate,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    model: &'a TrackingModel,
    env: Environment,
    fp: RobustFootprint,
    goal: PlannerState,
    goal_tolerance: f64,
    map: KnowledgeMap,
    tracker: TrackerState,
    traj: Trajectory,
    planner: Planner,
    records: Vec<Record>,
    header: LogHeader,
    t: f64,
    ticks: usize,
    max_distance: f64,
    max_z_error: f64,
}

fn pose(a: [f64; 3]) -> PlannerState {
    PlannerState::new(a[0], a[1], a[2])
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig, model: &'a TrackingModel, mode: Mode) -> Result<Self> {
        let env = cfg.environment()?;
        let bound = model.bound;
        let fp = RobustFootprint::new(cfg.vehicle.robot_radius, bound.planar_tolerance())
            .map_err(|e| Error::Config(e.to_string()))?;
        env.validate(fp.radius)?;
        let home = pose(cfg.environment.home);
        let goal = pose(cfg.environment.goal);
        let goal_tolerance = cfg.termination.goal_tolerance.unwrap_or(bound.planar_tolerance());
        let mut map = KnowledgeMap::with_min_gain(env.bounds, cfg.sensing.min_gain)?;
        let first = map.sense(home.position(), &env, cfg.sensing.range, 0.0)?;

        let header = LogHeader {
            schema: log::SCHEMA.into(),
            version: log::VERSION,
            scenario: cfg.name.clone(),
            mode: mode.name().into(),
            seed: cfg.planner.seed,
            bounds: [env.bounds.min, env.bounds.max],
            home: cfg.environment.home,
            goal: cfg.environment.goal,
            sensing_range: cfg.sensing.range,
            robot_radius: cfg.vehicle.robot_radius,
            footprint_radius: fp.radius,
            flight_height: cfg.vehicle.flight_height,
            bound,
        };
        let planar = &model.planar;
        let mut records = vec![Record::ValueProjection {
            t: 0.0,
            d: (0..planar.axes[0].count).map(|k| planar.axes[0].node(k)).collect(),
            psi: (0..planar.axes[1].count).map(|k| planar.axes[1].node(k)).collect(),
            values: velocity_min_projection(planar),
            level: bound.level,
        }];
        records.push(sensor_record(0.0, home.position(), cfg.sensing.range, &first, &env));

        let gp = cfg.graph_params()?;
        let (planner, traj) = match mode {
            Mode::Framework => {
                let graph = ReachGraph::new(home, goal, gp, &map, fp)?;
                let traj = initial_trajectory(&graph, 0.0);
                let seed = cfg.planner.seed;
                let fw = Framework {
                    policy: ExplorationPolicy::new(cfg.planner.epsilon, seed)?,
                    sample_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001),
                    shuffle_rng: cfg.schedule.shuffle_seed.map(ChaCha8Rng::seed_from_u64),
                    consolidate_cursor: 0,
                    next_request: 0.0,
                    target_time: None,
                    responses: Vec::new(),
                    graph,
                };
                records.push(Record::GraphDelta {
                    t: 0.0,
                    vertices: (0..fw.graph.vertices().len()).map(|v| fw.graph.vertex_record(v)).collect(),
                    edges: fw.graph.edges().iter().map(|e| EdgeRecord::new(e, POLYLINE_STRIDE)).collect(),
                    promoted: Vec::new(),
                    visited: Vec::new(),
                });
                (Planner::Framework(fw), traj)
            }
            Mode::Optimistic => {
                let mut b = baseline::Optimistic::new(cfg, &env, home, goal, fp)?;
                let traj = b.initial(&map, home, gp.dt);
                (Planner::Optimistic(b), traj)
            }
        };
        let tracker = TrackerState::aligned_with(&home, cfg.vehicle.flight_height, cfg.vehicle.speed);
        let mut sim = Self {
            cfg,
            model,
            env,
            fp,
            goal,
            goal_tolerance,
            map,
            tracker,
            traj,
            planner,
            records,
            header,
            t: 0.0,
            ticks: 0,
            max_distance: 0.0,
            max_z_error: 0.0,
        };
        sim.issue_initial();
        Ok(sim)
    }

    fn issue_initial(&mut self) {
        let resp = PlanResponse {
            time: 0.0,
            kind: match self.planner {
                Planner::Framework(_) => ResponseKind::Initial,
                Planner::Optimistic(_) => ResponseKind::Goal,
            },
            trajectory: self.traj.clone(),
        };
        if let Planner::Framework(fw) = &mut self.planner {
            let reference = resp.trajectory.first_state();
            if let Err(e) = verify_response(&resp, &reference, &fw.graph, &self.map, self.fp) {
                self.records.push(Record::Violation {
                    t: 0.0,
                    kind: ViolationKind::UnsafeResponse,
                    detail: e.to_string(),
                });
            }
            fw.responses.push(IssuedResponse {
                response: resp.clone(),
                reference,
                map: self.map.clone(),
            });
            fw.next_request = self.cfg.planner.replan_period.min(resp.trajectory.end_time());
        }
        self.records.push(plan_record(&resp, mode_label(&self.planner)));
    }

    fn violation(&mut self, kind: ViolationKind, detail: String) {
        ::log::debug!("t={:.2}: {kind:?}: {detail}", self.t);
        self.records.push(Record::Violation { t: self.t, kind, detail });
    }

    fn run(mut self) -> Result<RunOutcome> {
        let outcome = loop {
            if let Some(o) = self.advance_tracker() {
                break o;
            }
            self.sense()?;
            self.plan()?;
            if self.ticks >= self.cfg.termination.max_ticks {
                break Outcome::Timeout;
            }
        };
        let (vertices, backward, edges) = match &self.planner {
            Planner::Framework(fw) => (fw.graph.vertices().len(), fw.graph.backward_count(), fw.graph.edges().len()),
            Planner::Optimistic(b) => (b.node_count(), 0, 0),
        };
        let violations = self.records.iter().filter(|r| matches!(r, Record::Violation { .. })).count();
        self.records.push(Record::Termination {
            t: self.t,
            outcome,
            ticks: self.ticks,
            vertices,
            backward,
            edges,
            violations,
        });
        let (graph, responses) = match self.planner {
            Planner::Framework(fw) => (Some(fw.graph), fw.responses),
            Planner::Optimistic(_) => (None, Vec::new()),
        };
        Ok(RunOutcome {
            outcome,
            ticks: self.ticks,
            end_time: self.t,
            log: RunLog {
                header: self.header,
                records: self.records,
            },
            responses,
            graph,
            map: self.map,
            environment: self.env,
            footprint: self.fp,
            max_distance: self.max_distance,
            max_z_error: self.max_z_error,
        })
    }

    /// Integrates one tick under the tracking controller. Returns an outcome
    /// if the run ends inside the tick.
    fn advance_tracker(&mut self) -> Option<Outcome> {
        let sched = &self.cfg.schedule;
        let g = self.cfg.vehicle.gravity;
        let z_ref = self.cfg.vehicle.flight_height;
        let h = sched.tick / sched.substeps as f64;
        let t_end = (self.ticks + 1) as f64 * sched.tick;
        let arrival = (self.traj.terminal == Terminal::Goal).then(|| self.traj.end_time());
        let bound = self.model.bound;
        let mut tick_max = (0.0f64, 0.0f64);
        let mut ended = None;
        let mut t = self.t;
        while t < t_end - TIME_EPS {
            let mut next = t + h;
            if next > t_end - TIME_EPS {
                next = t_end;
            }
            if let Some(ta) = arrival {
                if ta > t + TIME_EPS && ta < next - TIME_EPS {
                    next = ta;
                }
            }
            let p = self.traj.state_at(t);
            let u = self.model.control(&self.tracker, &p, z_ref);
            self.tracker = step_tracker(&self.tracker, &u, g, next - t);
            t = next;
            let p = self.traj.state_at(t);
            let s = &self.tracker;
            tick_max.0 = tick_max.0.max((s.x - p.x).hypot(s.y - p.y));
            tick_max.1 = tick_max.1.max((s.z - z_ref).abs());
            if self.env.collides([s.x, s.y], self.cfg.vehicle.robot_radius) {
                ended = Some(Outcome::Collision);
                break;
            }
            if (s.x - self.goal.x).hypot(s.y - self.goal.y) <= self.goal_tolerance {
                ended = Some(Outcome::Success);
                break;
            }
        }
        self.t = t;
        self.ticks += 1;
        self.max_distance = self.max_distance.max(tick_max.0);
        self.max_z_error = self.max_z_error.max(tick_max.1);

        let s = self.tracker;
        let p = self.traj.state_at(t);
        let r = relative_state(&s, &p, self.cfg.vehicle.speed);
        let value = self.model.value(&r);
        self.records.push(Record::TrackerSample {
            t,
            state: [s.x, s.y, s.z, s.vx, s.vy, s.vz],
            reference: [p.x, p.y, p.theta],
            relative: r.to_array(),
            value: value.is_finite().then_some(value),
            distance: r.d,
            z_error: s.z - z_ref,
        });
        if tick_max.0 > bound.planar_tolerance() + TIME_EPS {
            self.violation(
                ViolationKind::TrackingBound,
                format!("planar error {:.4} exceeds {:.4}", tick_max.0, bound.planar_tolerance()),
            );
        }
        if tick_max.1 > bound.vertical_tolerance() + TIME_EPS {
            self.violation(
                ViolationKind::VerticalBound,
                format!("height error {:.4} exceeds {:.4}", tick_max.1, bound.vertical_tolerance()),
            );
        }
        if ended == Some(Outcome::Collision) {
            self.violation(
                ViolationKind::Collision,
                format!("footprint at ({:.3}, {:.3}) meets an obstacle or the boundary", s.x, s.y),
            );
        }
        ended
    }

    fn sense(&mut self) -> Result<()> {
        let pos = [self.tracker.x, self.tracker.y];
        let range = self.cfg.sensing.range;
        let up = self.map.sense(pos, &self.env, range, self.t)?;
        if up.region_grew || !up.new_obstacles.is_empty() {
            self.records.push(sensor_record(self.t, pos, range, &up, &self.env));
        }
        Ok(())
    }

    fn plan(&mut self) -> Result<()> {
        match &mut self.planner {
            Planner::Framework(_) => self.plan_framework(),
            Planner::Optimistic(_) => {
                self.plan_optimistic();
                Ok(())
            }
        }
    }

    fn plan_optimistic(&mut self) {
        let Planner::Optimistic(b) = &mut self.planner else {
            unreachable!()
        };
        let t = self.t;
        match b.step(&self.map, &self.traj, t) {
            baseline::Step::Keep => {}
            baseline::Step::Replace(traj) => {
                self.traj = traj;
                let resp = PlanResponse {
                    time: t,
                    kind: ResponseKind::Goal,
                    trajectory: self.traj.clone(),
                };
                self.records.push(plan_record(&resp, "optimistic"));
            }
            baseline::Step::Trapped => {
                self.violation(ViolationKind::Trapped, "no optimistic path to the goal".into());
            }
        }
    }

    fn plan_framework(&mut self) -> Result<()> {
        let t = self.t;
        let Planner::Framework(fw) = &mut self.planner else {
            unreachable!()
        };
        let map = &self.map;
        let fp = self.fp;

        let reached: Vec<usize> = reached_vertices(&self.traj, t)
            .into_iter()
            .filter(|&v| !fw.graph.vertex(v).visited)
            .collect();
        let mut visited = reached.clone();
        visited.sort_unstable();
        visited.dedup();
        fw.graph.mark_visited(&visited);

        let sched = &self.cfg.schedule;
        let mut tasks = vec![Task::Goal];
        tasks.extend(std::iter::repeat(Task::Expand).take(sched.expansions_per_tick));
        tasks.extend(std::iter::repeat(Task::Consolidate).take(sched.consolidations_per_tick));
        if let Some(rng) = fw.shuffle_rng.as_mut() {
            tasks.shuffle(rng);
        }
        let first_vertex = fw.graph.vertices().len();
        let first_edge = fw.graph.edges().len();
        let mut promoted = Vec::new();
        for task in tasks {
            match task {
                Task::Goal => {
                    if let Some(x) = fw.graph.try_goal(map, fp) {
                        promoted.extend(x.promoted);
                    }
                }
                Task::Expand => {
                    let draws = sched.draws_per_expansion.max(1);
                    let candidate = (0..draws).find_map(|_| sample_candidate(map, fp, &mut fw.sample_rng));
                    if let Some(p) = candidate {
                        if let Some(x) = fw.graph.outbound_expand(p, map, fp) {
                            promoted.extend(x.promoted);
                        }
                    }
                }
                Task::Consolidate => {
                    let open = fw.graph.forward_only();
                    let pick = open.iter().copied().find(|&v| v >= fw.consolidate_cursor).or(open.first().copied());
                    if let Some(v) = pick {
                        fw.consolidate_cursor = v + 1;
                        if let Some(x) = fw.graph.inbound_consolidate(v, map, fp) {
                            promoted.extend(x.promoted);
                        }
                    }
                }
            }
        }
        let g = &fw.graph;
        if g.vertices().len() > first_vertex || g.edges().len() > first_edge || !promoted.is_empty() || !visited.is_empty()
        {
            self.records.push(Record::GraphDelta {
                t,
                vertices: (first_vertex..g.vertices().len()).map(|v| g.vertex_record(v)).collect(),
                edges: g.edges()[first_edge..].iter().map(|e| EdgeRecord::new(e, POLYLINE_STRIDE)).collect(),
                promoted,
                visited,
            });
        }
        if let Err(e) = g.check_invariants_since(first_edge) {
            let detail = e.to_string();
            self.violation(ViolationKind::GraphInvariant, detail);
        }

        let Planner::Framework(fw) = &mut self.planner else {
            unreachable!()
        };
        if self.traj.terminal == Terminal::Goal {
            return Ok(());
        }
        let due = t >= fw.next_request - TIME_EPS || fw.target_time.is_some_and(|tt| t >= tt - TIME_EPS);
        if !due {
            return Ok(());
        }
        fw.next_request = t + self.cfg.planner.replan_period;
        fw.target_time = None;
        let reference = self.traj.state_at(t);
        let resp = match request_trajectory(&fw.graph, &self.traj, t, &mut fw.policy) {
            Ok(r) => r,
            Err(e) => {
                let detail = e.to_string();
                self.violation(ViolationKind::NonViable, detail);
                return Ok(());
            }
        };
        if let Err(e) = verify_response(&resp, &reference, &fw.graph, &self.map, self.fp) {
            let detail = e.to_string();
            self.violation(ViolationKind::UnsafeResponse, detail);
            return Ok(());
        }
        fw.target_time = resp.target_time();
        fw.responses.push(IssuedResponse {
            response: resp.clone(),
            reference,
            map: self.map.clone(),
        });
        self.records.push(plan_record(&resp, "framework"));
        if resp.kind != ResponseKind::Repeat {
            self.traj = resp.trajectory;
        }
        Ok(())
    }
}

fn mode_label(p: &Planner) -> &'static str {
    match p {
        Planner::Framework(_) => "framework",
        Planner::Optimistic(_) => "optimistic",
    }
}

fn sensor_record(t: f64, position: [f64; 2], range: f64, up: &crate::world::SenseUpdate, env: &Environment) -> Record {
    Record::SensorUpdate {
        t,
        position,
        range,
        region_grew: up.region_grew,
        new_obstacles: up
            .new_obstacles
            .iter()
            .map(|&id| ObstacleRecord {
                id,
                center: env.obstacles[id].center,
                radius: env.obstacles[id].radius,
            })
            .collect(),
    }
}

fn plan_record(resp: &PlanResponse, planner: &str) -> Record {
    let (kind, target) = match resp.kind {
        ResponseKind::Initial => ("initial", None),
        ResponseKind::Goal if planner == "optimistic" => ("optimistic", None),
        ResponseKind::Goal => ("goal", None),
        ResponseKind::Explore { target } => ("explore", Some(target)),
        ResponseKind::Repeat => ("repeat", None),
    };
    let terminal = match resp.trajectory.terminal {
        Terminal::Open => "open",
        Terminal::Goal => "goal",
        Terminal::HomeCycle { .. } => "home_cycle",
    };
    Record::PlanResponse {
        t: resp.time,
        kind: kind.into(),
        target,
        terminal: terminal.into(),
        duration: resp.trajectory.duration(),
        polyline: resp.trajectory.polyline(POLYLINE_STRIDE),
    }
}
