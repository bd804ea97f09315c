//! Comparison planner that treats unknown space as free: A* over a fixed
//! random roadmap of Dubins edges, checked lazily against the bounds and the
//! obstacles discovered so far.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ScenarioConfig;
use crate::dynamics::{dubins_connect, PlannerState, Terminal, Trajectory, TrajectorySample};
use crate::error::Result;
use crate::meta_graph::{home_loop, GraphParams};
use crate::world::{Environment, KnowledgeMap, RobustFootprint};

pub(crate) enum Step {
    Keep,
    Replace(Trajectory),
    /// No path exists even under optimism; the old reference continues.
    Trapped,
}

#[derive(Clone)]
enum EdgeState {
    /// No steering path, or blocked by known obstacles. Permanent, since
    /// knowledge only grows.
    Blocked,
    /// Clear as of the given number of discovered obstacles.
    Clear(Trajectory, usize),
}

pub(crate) struct Optimistic {
    params: GraphParams,
    fp: RobustFootprint,
    /// Roadmap poses; the last one is the goal.
    nodes: Vec<PlannerState>,
    neighbours: Vec<Vec<usize>>,
    edges: HashMap<(usize, usize), EdgeState>,
    replan_period: f64,
    next_replan: f64,
    known_obstacles: usize,
    trapped: bool,
}

#[derive(PartialEq)]
struct Open(f64, usize);

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBOURS: usize = 10;

fn nearest(nodes: &[PlannerState], p: &PlannerState, k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..nodes.len()).filter(|&i| Some(i) != skip).collect();
    ids.sort_by(|&a, &b| {
        nodes[a]
            .planar_distance(p)
            .total_cmp(&nodes[b].planar_distance(p))
            .then(a.cmp(&b))
    });
    ids.truncate(k);
    ids
}

impl Optimistic {
    pub(crate) fn new(
        cfg: &ScenarioConfig,
        env: &Environment,
        _home: PlannerState,
        goal: PlannerState,
        fp: RobustFootprint,
    ) -> Result<Self> {
        let params = cfg.graph_params()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.planner.seed ^ 0xba5e_0001);
        let b = env.bounds;
        let mut nodes = Vec::with_capacity(cfg.planner.baseline_roadmap + 1);
        while nodes.len() < cfg.planner.baseline_roadmap {
            let p = PlannerState::new(
                rng.gen_range(b.min[0]..b.max[0]),
                rng.gen_range(b.min[1]..b.max[1]),
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            );
            if b.contains_disc(p.position(), fp.radius) {
                nodes.push(p);
            }
        }
        nodes.push(goal);
        let neighbours = (0..nodes.len())
            .map(|i| {
                let mut n = nearest(&nodes, &nodes[i], NEIGHBOURS, Some(i));
                let g = nodes.len() - 1;
                if i != g && !n.contains(&g) {
                    n.push(g);
                }
                n
            })
            .collect();
        Ok(Self {
            params,
            fp,
            nodes,
            neighbours,
            edges: HashMap::new(),
            replan_period: cfg.planner.replan_period,
            next_replan: 0.0,
            known_obstacles: 0,
            trapped: false,
        })
    }

    pub(crate) fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// First reference: a plan from home, or the home loop if none exists.
    pub(crate) fn initial(&mut self, map: &KnowledgeMap, home: PlannerState, _dt: f64) -> Trajectory {
        self.known_obstacles = map.discovered().len();
        self.next_replan = self.replan_period;
        match self.plan(map, &home, 0.0) {
            Some(t) => t,
            None => {
                self.trapped = true;
                home_loop(&home, &self.params, 0.0)
            }
        }
    }

    fn clear(&self, map: &KnowledgeMap, traj: &Trajectory, from_index: usize) -> bool {
        let r = self.fp.radius + 0.5 * traj.speed * traj.max_spacing();
        traj.samples[from_index..]
            .iter()
            .all(|s| map.disc_clear_of_known(s.state.position(), r))
    }

    fn connect(&self, from: &PlannerState, to: &PlannerState) -> Option<Trajectory> {
        let p = &self.params;
        dubins_connect(from, to, p.turn_radius, p.speed, p.dt, 0.0)
            .ok()
            .flatten()
            .filter(|t| t.samples.len() >= 2)
    }

    /// Clear roadmap edge, computing or rechecking it as needed.
    fn edge(&mut self, map: &KnowledgeMap, u: usize, v: usize) -> Option<Trajectory> {
        let known = map.discovered().len();
        let state = match self.edges.get(&(u, v)) {
            Some(EdgeState::Blocked) => return None,
            Some(EdgeState::Clear(t, n)) if *n == known => return Some(t.clone()),
            Some(EdgeState::Clear(t, _)) => Some(t.clone()),
            None => self.connect(&self.nodes[u], &self.nodes[v]),
        };
        let next = match state {
            Some(t) if self.clear(map, &t, 0) => EdgeState::Clear(t, known),
            _ => EdgeState::Blocked,
        };
        self.edges.insert((u, v), next.clone());
        match next {
            EdgeState::Clear(t, _) => Some(t),
            EdgeState::Blocked => None,
        }
    }

    /// Shortest optimistic path from `from` to the goal, starting at time `t`.
    fn plan(&mut self, map: &KnowledgeMap, from: &PlannerState, t: f64) -> Option<Trajectory> {
        let n = self.nodes.len();
        let goal = n - 1;
        let start = n;
        let speed = self.params.speed;
        let mut first: Vec<(usize, Trajectory)> = Vec::new();
        let mut cands = nearest(&self.nodes, from, NEIGHBOURS, None);
        if !cands.contains(&goal) {
            cands.push(goal);
        }
        for v in cands {
            if let Some(tr) = self.connect(from, &self.nodes[v]) {
                if self.clear(map, &tr, 0) {
                    first.push((v, tr));
                }
            }
        }

        let goal_state = self.nodes[goal];
        let h = move |p: &PlannerState| p.planar_distance(&goal_state);
        let mut g_cost = vec![f64::INFINITY; n + 1];
        let mut parent: Vec<Option<(usize, Trajectory)>> = vec![None; n + 1];
        let mut closed = vec![false; n + 1];
        let mut heap = BinaryHeap::new();
        g_cost[start] = 0.0;
        heap.push(Open(h(from), start));
        while let Some(Open(_, u)) = heap.pop() {
            if closed[u] {
                continue;
            }
            closed[u] = true;
            if u == goal {
                break;
            }
            let out: Vec<(usize, Trajectory)> = if u == start {
                first.clone()
            } else {
                let nbrs = self.neighbours[u].clone();
                nbrs.into_iter().filter_map(|v| self.edge(map, u, v).map(|tr| (v, tr))).collect()
            };
            for (v, tr) in out {
                if closed[v] {
                    continue;
                }
                let c = g_cost[u] + tr.duration() * speed;
                if c < g_cost[v] {
                    g_cost[v] = c;
                    heap.push(Open(c + h(&self.nodes[v]), v));
                    parent[v] = Some((u, tr));
                }
            }
        }
        if !closed[goal] {
            return None;
        }
        let mut pieces = Vec::new();
        let mut v = goal;
        while v != start {
            let (u, tr) = parent[v].take().expect("closed nodes have parents");
            pieces.push(tr);
            v = u;
        }
        pieces.reverse();
        let mut samples: Vec<TrajectorySample> = Vec::new();
        for tr in pieces {
            let offset = samples.last().map_or(t, |s| s.time) - tr.start_time();
            if !samples.is_empty() {
                samples.pop();
            }
            samples.extend(tr.samples.iter().map(|s| TrajectorySample {
                time: s.time + offset,
                ..*s
            }));
        }
        Some(Trajectory {
            speed,
            samples,
            terminal: Terminal::Goal,
            legs: Vec::new(),
        })
    }

    /// Replans every period, or at once when the current reference is known
    /// to be blocked. While trapped, retries only on new obstacles or after
    /// a period.
    pub(crate) fn step(&mut self, map: &KnowledgeMap, traj: &Trajectory, t: f64) -> Step {
        let known = map.discovered().len();
        let grew = known != self.known_obstacles;
        self.known_obstacles = known;
        let finished = traj.terminal == Terminal::Goal && t >= traj.end_time();
        let blocked = grew && !self.clear(map, traj, traj.index_at(t));
        let periodic = t >= self.next_replan;
        if finished || !(blocked || periodic || (self.trapped && grew)) {
            return Step::Keep;
        }
        self.next_replan = t + self.replan_period;
        let from = traj.state_at(t);
        match self.plan(map, &from, t) {
            Some(tr) => {
                self.trapped = false;
                Step::Replace(tr)
            }
            None if self.trapped => Step::Keep,
            None => {
                self.trapped = true;
                Step::Trapped
            }
        }
    }
}
