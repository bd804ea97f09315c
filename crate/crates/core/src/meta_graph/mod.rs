//! Roadmaps of the safe forward reachable set from home (G_F) and of the
//! states known to reach home or the goal (G_B, a subset of G_F).

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{dubins_connect, propagate_planner, wrap_angle, PlannerControl, PlannerState, Terminal, Trajectory, TrajectorySample};
use crate::error::{Error, Result};
use crate::world::{KnowledgeMap, RobustFootprint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub state: PlannerState,
    pub in_backward_set: bool,
    pub visited: bool,
    pub cost_from_home: f64,
    pub cost_to_home: f64,
    pub cost_to_goal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub trajectory: Trajectory,
    /// Duration [s].
    pub cost: f64,
    /// Knowledge-map time at which the safety check passed.
    pub knowledge_stamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub speed: f64,
    /// Minimum turning radius [m].
    pub turn_radius: f64,
    /// Sample spacing of edge trajectories [s].
    pub dt: f64,
    /// Neighbours tried per connection attempt.
    pub k: usize,
    /// Weight of heading in the neighbour metric [m/rad].
    pub heading_weight: f64,
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.speed, self.turn_radius, self.dt];
        if positive.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidInput("speed, turn radius and dt must be positive".into()));
        }
        if self.k == 0 || !(self.heading_weight >= 0.0) {
            return Err(Error::InvalidInput("k must be positive and heading weight non-negative".into()));
        }
        Ok(())
    }
}

/// Result of a successful outbound expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub vertex: usize,
    pub edge: usize,
    /// Vertices that joined G_B as a consequence (non-empty only for the goal).
    pub promoted: Vec<usize>,
}

/// Result of a successful inbound consolidation.
#[derive(Debug, Clone, PartialEq)]
pub struct Promotion {
    pub edge: usize,
    /// The consolidated vertex followed by its newly promoted ancestors.
    pub promoted: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    cost: f64,
    id: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (cost, id).
        other.cost.total_cmp(&self.cost).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CostField {
    FromHome,
    ToHome,
    ToGoal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReachGraph {
    pub params: GraphParams,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    home_id: usize,
    goal_id: Option<usize>,
    goal: PlannerState,
}

/// Constant-rate loop of the minimum turning radius through `home`, sampled
/// every `dt`; the last sample is exactly `home`.
pub fn home_loop(home: &PlannerState, params: &GraphParams, t0: f64) -> Trajectory {
    let c = PlannerControl::new(params.speed / params.turn_radius);
    let period = 2.0 * PI * params.turn_radius / params.speed;
    let n = (period / params.dt).ceil() as usize;
    let h = period / n as f64;
    let mut samples: Vec<TrajectorySample> = (0..n)
        .map(|i| TrajectorySample {
            time: t0 + h * i as f64,
            state: propagate_planner(home, c, params.speed, h * i as f64),
            control: c,
        })
        .collect();
    samples.push(TrajectorySample {
        time: t0 + period,
        state: *home,
        control: c,
    });
    Trajectory {
        speed: params.speed,
        samples,
        terminal: Terminal::Open,
        legs: Vec::new(),
    }
}

impl ReachGraph {
    /// Graph holding only `home`, with its minimum-radius loop as a
    /// self-edge. Fails if that loop is not known safe, since then no viable
    /// initial trajectory exists.
    pub fn new(home: PlannerState, goal: PlannerState, params: GraphParams, map: &KnowledgeMap, fp: RobustFootprint) -> Result<Self> {
        params.validate()?;
        let mut g = Self {
            params,
            vertices: Vec::new(),
            edges: Vec::new(),
            out_edges: Vec::new(),
            in_edges: Vec::new(),
            home_id: 0,
            goal_id: None,
            goal,
        };
        g.push_vertex(home);
        let v = &mut g.vertices[0];
        v.in_backward_set = true;
        v.visited = true;
        v.cost_from_home = 0.0;
        v.cost_to_home = 0.0;
        let loop_traj = home_loop(&home, &params, 0.0);
        if !map.trajectory_safe(&loop_traj, fp) {
            return Err(Error::Config("the minimum-radius loop through home is not known to be safe".into()));
        }
        g.push_edge(0, 0, loop_traj, map.time());
        if goal.matches(&home) {
            g.goal_id = Some(0);
            g.vertices[0].cost_to_goal = 0.0;
        }
        Ok(g)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex(&self, id: usize) -> &Vertex {
        &self.vertices[id]
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    pub fn out_edges(&self, id: usize) -> &[usize] {
        &self.out_edges[id]
    }

    pub fn in_edges(&self, id: usize) -> &[usize] {
        &self.in_edges[id]
    }

    pub fn home_id(&self) -> usize {
        self.home_id
    }

    pub fn goal_id(&self) -> Option<usize> {
        self.goal_id
    }

    pub fn goal_state(&self) -> PlannerState {
        self.goal
    }

    /// Id of the home self-loop edge.
    pub fn home_loop_edge(&self) -> usize {
        0
    }

    pub fn backward_count(&self) -> usize {
        self.vertices.iter().filter(|v| v.in_backward_set).count()
    }

    /// Neighbour metric over `(x, y, w * theta)` with wrapped heading.
    pub fn metric(&self, a: &PlannerState, b: &PlannerState) -> f64 {
        let dth = wrap_angle(a.theta - b.theta) * self.params.heading_weight;
        ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + dth * dth).sqrt()
    }

    /// Up to `k` vertices passing `filter`, nearest first (ties by id).
    pub fn nearest(&self, p: &PlannerState, k: usize, filter: impl Fn(&Vertex) -> bool) -> Vec<usize> {
        let mut scored: Vec<(f64, usize)> = self
            .vertices
            .iter()
            .filter(|v| filter(v))
            .map(|v| (self.metric(p, &v.state), v.id))
            .collect();
        let k = k.min(scored.len());
        if k == 0 {
            return Vec::new();
        }
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
        scored.sort_by(cmp);
        scored.into_iter().map(|(_, id)| id).collect()
    }

    fn push_vertex(&mut self, state: PlannerState) -> usize {
        let id = self.vertices.len();
        self.vertices.push(Vertex {
            id,
            state,
            in_backward_set: false,
            visited: false,
            cost_from_home: f64::INFINITY,
            cost_to_home: f64::INFINITY,
            cost_to_goal: f64::INFINITY,
        });
        self.out_edges.push(Vec::new());
        self.in_edges.push(Vec::new());
        id
    }

    fn push_edge(&mut self, from: usize, to: usize, trajectory: Trajectory, stamp: f64) -> usize {
        let id = self.edges.len();
        let cost = trajectory.duration();
        self.edges.push(Edge {
            id,
            from,
            to,
            trajectory,
            cost,
            knowledge_stamp: stamp,
        });
        self.out_edges[from].push(id);
        self.in_edges[to].push(id);
        id
    }

    /// Adds the end state of `trajectory` as a new vertex reached from
    /// `parent`. The caller vouches for the trajectory's safety.
    pub fn insert_vertex(&mut self, parent: usize, trajectory: Trajectory, stamp: f64) -> Result<Expansion> {
        if parent >= self.vertices.len() {
            return Err(Error::InvalidInput(format!("no vertex {parent}")));
        }
        if trajectory.samples.is_empty() || !trajectory.first_state().matches(&self.vertices[parent].state) {
            return Err(Error::InvalidInput("edge does not start at its parent".into()));
        }
        let state = trajectory.last_state();
        if self.is_duplicate(&state) {
            return Err(Error::InvalidInput("state duplicates an existing vertex".into()));
        }
        let id = self.push_vertex(state);
        let edge = self.push_edge(parent, id, trajectory, stamp);
        let mut promoted = Vec::new();
        if state.matches(&self.goal) {
            self.goal_id = Some(id);
            self.vertices[id].cost_to_goal = 0.0;
            promoted = self.promote_with_ancestors(id);
        }
        self.update_costs(&[edge]);
        Ok(Expansion { vertex: id, edge, promoted })
    }

    /// Adds an edge between existing vertices. If `to` is in G_B, `from`
    /// and its ancestors join G_B. The caller vouches for safety.
    pub fn insert_edge(&mut self, from: usize, to: usize, trajectory: Trajectory, stamp: f64) -> Result<Promotion> {
        let n = self.vertices.len();
        if from >= n || to >= n {
            return Err(Error::InvalidInput(format!("edge {from}->{to} names a missing vertex")));
        }
        if trajectory.samples.is_empty()
            || !trajectory.first_state().matches(&self.vertices[from].state)
            || !trajectory.last_state().matches(&self.vertices[to].state)
        {
            return Err(Error::InvalidInput("edge endpoints do not match its vertices".into()));
        }
        let edge = self.push_edge(from, to, trajectory, stamp);
        let promoted = if self.vertices[to].in_backward_set {
            self.promote_with_ancestors(from)
        } else {
            Vec::new()
        };
        self.update_costs(&[edge]);
        Ok(Promotion { edge, promoted })
    }

    /// Safe edge between two states, if the steering path passes the check.
    fn connect(&self, from: &PlannerState, to: &PlannerState, map: &KnowledgeMap, fp: RobustFootprint) -> Option<Trajectory> {
        let p = &self.params;
        let traj = dubins_connect(from, to, p.turn_radius, p.speed, p.dt, 0.0).ok().flatten()?;
        if traj.samples.len() < 2 {
            return None;
        }
        map.trajectory_safe(&traj, fp).then_some(traj)
    }

    fn is_duplicate(&self, p: &PlannerState) -> bool {
        self.vertices.iter().any(|v| v.state.matches(p))
    }

    /// Tries to reach `p_new` from one of its `k` nearest vertices. On the
    /// first safe connection the vertex and edge are added.
    pub fn outbound_expand(&mut self, p_new: PlannerState, map: &KnowledgeMap, fp: RobustFootprint) -> Option<Expansion> {
        if !p_new.is_finite() || self.is_duplicate(&p_new) || !map.footprint_free(&p_new, fp) {
            return None;
        }
        for parent in self.nearest(&p_new, self.params.k, |_| true) {
            let Some(traj) = self.connect(&self.vertices[parent].state, &p_new, map, fp) else {
                continue;
            };
            return self.insert_vertex(parent, traj, map.time()).ok();
        }
        None
    }

    /// Retries the goal as an expansion target if it is not yet in the graph.
    pub fn try_goal(&mut self, map: &KnowledgeMap, fp: RobustFootprint) -> Option<Expansion> {
        if self.goal_id.is_some() {
            return None;
        }
        self.outbound_expand(self.goal, map, fp)
    }

    /// Tries to connect `v` to one of its `k` nearest G_B vertices. On
    /// success `v` and all of its ancestors join G_B.
    pub fn inbound_consolidate(&mut self, v: usize, map: &KnowledgeMap, fp: RobustFootprint) -> Option<Promotion> {
        if self.vertices[v].in_backward_set {
            return None;
        }
        let state = self.vertices[v].state;
        for target in self.nearest(&state, self.params.k, |u| u.in_backward_set && u.id != v) {
            let Some(traj) = self.connect(&state, &self.vertices[target].state, map, fp) else {
                continue;
            };
            return self.insert_edge(v, target, traj, map.time()).ok();
        }
        None
    }

    /// Vertices of G_F not yet in G_B, ascending.
    pub fn forward_only(&self) -> Vec<usize> {
        self.vertices.iter().filter(|v| !v.in_backward_set).map(|v| v.id).collect()
    }

    /// Marks `v` and every vertex with a path to it as members of G_B.
    fn promote_with_ancestors(&mut self, v: usize) -> Vec<usize> {
        let mut promoted = Vec::new();
        let mut queue = VecDeque::from([v]);
        if !self.vertices[v].in_backward_set {
            self.vertices[v].in_backward_set = true;
            promoted.push(v);
        }
        while let Some(u) = queue.pop_front() {
            for &e in &self.in_edges[u] {
                let a = self.edges[e].from;
                if !self.vertices[a].in_backward_set {
                    self.vertices[a].in_backward_set = true;
                    promoted.push(a);
                    queue.push_back(a);
                }
            }
        }
        promoted
    }

    fn field(&mut self, v: usize, f: CostField) -> &mut f64 {
        let vx = &mut self.vertices[v];
        match f {
            CostField::FromHome => &mut vx.cost_from_home,
            CostField::ToHome => &mut vx.cost_to_home,
            CostField::ToGoal => &mut vx.cost_to_goal,
        }
    }

    /// Restores the three cost fields to exact shortest-path values after
    /// the given edges were inserted. Insertions only lower costs, so a
    /// Dijkstra sweep seeded at the improved endpoints suffices.
    pub fn update_costs(&mut self, changed: &[usize]) {
        for field in [CostField::FromHome, CostField::ToHome, CostField::ToGoal] {
            let forward = field == CostField::FromHome;
            let mut heap = BinaryHeap::new();
            for &e in changed {
                let (tail, head, w) = {
                    let ed = &self.edges[e];
                    if forward {
                        (ed.from, ed.to, ed.cost)
                    } else {
                        (ed.to, ed.from, ed.cost)
                    }
                };
                let cand = *self.field(tail, field) + w;
                if cand < *self.field(head, field) {
                    *self.field(head, field) = cand;
                    heap.push(HeapItem { cost: cand, id: head });
                }
            }
            while let Some(HeapItem { cost, id }) = heap.pop() {
                if cost > *self.field(id, field) {
                    continue;
                }
                let adj = if forward { self.out_edges[id].clone() } else { self.in_edges[id].clone() };
                for e in adj {
                    let ed = &self.edges[e];
                    let (next, w) = if forward { (ed.to, ed.cost) } else { (ed.from, ed.cost) };
                    let cand = cost + w;
                    if cand < *self.field(next, field) {
                        *self.field(next, field) = cand;
                        heap.push(HeapItem { cost: cand, id: next });
                    }
                }
            }
        }
    }

    /// Minimum-cost edge sequence from `from` to `to`; ties go to the
    /// smaller vertex id. Empty for `from == to`.
    pub fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        if from >= self.vertices.len() || to >= self.vertices.len() {
            return None;
        }
        if from == to {
            return Some(Vec::new());
        }
        let n = self.vertices.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut via: Vec<Option<usize>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::from([HeapItem { cost: 0.0, id: from }]);
        dist[from] = 0.0;
        while let Some(HeapItem { cost, id }) = heap.pop() {
            if done[id] {
                continue;
            }
            done[id] = true;
            if id == to {
                break;
            }
            for &e in &self.out_edges[id] {
                let ed = &self.edges[e];
                let cand = cost + ed.cost;
                if !done[ed.to] && cand < dist[ed.to] {
                    dist[ed.to] = cand;
                    via[ed.to] = Some(e);
                    heap.push(HeapItem { cost: cand, id: ed.to });
                }
            }
        }
        if !done[to] {
            return None;
        }
        let mut path = Vec::new();
        let mut at = to;
        while at != from {
            let e = via[at].expect("settled vertex has a predecessor");
            path.push(e);
            at = self.edges[e].from;
        }
        path.reverse();
        Some(path)
    }

    pub fn path_cost(&self, path: &[usize]) -> f64 {
        path.iter().map(|&e| self.edges[e].cost).sum()
    }

    /// Sets the visited flag; idempotent.
    pub fn mark_visited(&mut self, ids: &[usize]) {
        for &id in ids {
            self.vertices[id].visited = true;
        }
    }

    /// Checks the structural invariants: G_B closed under ancestors, every
    /// G_B vertex has a finite cost to home or goal, every vertex is
    /// reachable from home, and edge endpoints match their vertices.
    pub fn check_invariants(&self) -> Result<()> {
        self.check_invariants_since(0)
    }

    /// As [`Self::check_invariants`], but matches endpoints only for edges
    /// with id at least `first_edge`; stored edges never change.
    pub fn check_invariants_since(&self, first_edge: usize) -> Result<()> {
        for v in &self.vertices {
            if !v.cost_from_home.is_finite() {
                return Err(Error::Invariant(format!("vertex {} not reachable from home", v.id)));
            }
            if v.in_backward_set && !(v.cost_to_home.is_finite() || v.cost_to_goal.is_finite()) {
                return Err(Error::Invariant(format!("G_B vertex {} has no way back", v.id)));
            }
        }
        for e in &self.edges {
            let (a, b) = (&self.vertices[e.from], &self.vertices[e.to]);
            if e.id >= first_edge
                && (!e.trajectory.first_state().matches(&a.state) || !e.trajectory.last_state().matches(&b.state))
            {
                return Err(Error::Invariant(format!("edge {} endpoints do not match its vertices", e.id)));
            }
            if b.in_backward_set && !a.in_backward_set {
                return Err(Error::Invariant(format!("edge {} leaves G_B open under ancestors", e.id)));
            }
        }
        Ok(())
    }

    pub fn vertex_record(&self, id: usize) -> VertexRecord {
        let finite = |x: f64| x.is_finite().then_some(x);
        let v = &self.vertices[id];
        VertexRecord {
            id: v.id,
            state: [v.state.x, v.state.y, v.state.theta],
            in_backward_set: v.in_backward_set,
            visited: v.visited,
            cost_from_home: finite(v.cost_from_home),
            cost_to_home: finite(v.cost_to_home),
            cost_to_goal: finite(v.cost_to_goal),
        }
    }

    pub fn snapshot(&self, polyline_stride: usize) -> GraphSnapshot {
        GraphSnapshot {
            home_id: self.home_id,
            goal_id: self.goal_id,
            vertices: (0..self.vertices.len()).map(|id| self.vertex_record(id)).collect(),
            edges: self.edges.iter().map(|e| EdgeRecord::new(e, polyline_stride)).collect(),
        }
    }
}

/// Draws a uniform pose over the map bounds; `Some` only if its footprint is
/// FREE.
pub fn sample_candidate(map: &KnowledgeMap, fp: RobustFootprint, rng: &mut impl Rng) -> Option<PlannerState> {
    let b = map.bounds();
    let x = rng.gen_range(b.min[0]..b.max[0]);
    let y = rng.gen_range(b.min[1]..b.max[1]);
    let theta = PI - rng.gen_range(0.0..2.0 * PI);
    let p = PlannerState::new(x, y, theta);
    map.footprint_free(&p, fp).then_some(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexRecord {
    pub id: usize,
    pub state: [f64; 3],
    pub in_backward_set: bool,
    pub visited: bool,
    pub cost_from_home: Option<f64>,
    pub cost_to_home: Option<f64>,
    pub cost_to_goal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub cost: f64,
    pub knowledge_stamp: f64,
    pub polyline: Vec<[f64; 2]>,
}

impl EdgeRecord {
    pub fn new(e: &Edge, stride: usize) -> Self {
        Self {
            id: e.id,
            from: e.from,
            to: e.to,
            cost: e.cost,
            knowledge_stamp: e.knowledge_stamp,
            polyline: e.trajectory.polyline(stride),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub home_id: usize,
    pub goal_id: Option<usize>,
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
}
