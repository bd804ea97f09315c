//! Viable trajectory requests: through an unvisited G_B vertex and into a
//! cycle through home, or straight to the goal once it is in G_B.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Leg, PlannerState, Terminal, Trajectory, TrajectorySample};
use crate::error::{Error, Result};
use crate::meta_graph::ReachGraph;
use crate::world::{KnowledgeMap, RobustFootprint};

/// Epsilon-greedy choice of the next unvisited vertex.
#[derive(Debug, Clone)]
pub struct ExplorationPolicy {
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl ExplorationPolicy {
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidInput(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        Ok(Self {
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Unvisited G_B vertex: with probability `1 - epsilon` the one nearest the
/// goal in the plane (ties to the smaller id), otherwise a uniform draw.
pub fn select_unvisited(g: &ReachGraph, goal: &PlannerState, policy: &mut ExplorationPolicy) -> Option<usize> {
    let open: Vec<usize> = g
        .vertices()
        .iter()
        .filter(|v| v.in_backward_set && !v.visited)
        .map(|v| v.id)
        .collect();
    if open.is_empty() {
        return None;
    }
    if policy.epsilon > 0.0 && policy.rng.gen_bool(policy.epsilon) {
        return Some(open[policy.rng.gen_range(0..open.len())]);
    }
    open.into_iter().min_by(|&a, &b| {
        let da = g.vertex(a).state.planar_distance(goal);
        let db = g.vertex(b).state.planar_distance(goal);
        da.total_cmp(&db).then(a.cmp(&b))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseKind {
    /// The loop through home issued before any request.
    Initial,
    Goal,
    /// Through `target` and into the home cycle.
    Explore { target: usize },
    /// No unvisited vertex: the previous trajectory continues unchanged.
    Repeat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub time: f64,
    pub kind: ResponseKind,
    pub trajectory: Trajectory,
}

impl PlanResponse {
    /// Time at which the reference first reaches the explore target.
    pub fn target_time(&self) -> Option<f64> {
        let ResponseKind::Explore { target } = self.kind else {
            return None;
        };
        self.trajectory
            .legs
            .iter()
            .find(|l| l.to_vertex == target)
            .map(|l| self.trajectory.samples[l.end_index].time)
            .or(Some(self.trajectory.start_time()))
    }
}

/// Concatenates graph edges onto a trajectory under construction.
struct Builder<'g> {
    g: &'g ReachGraph,
    samples: Vec<TrajectorySample>,
    legs: Vec<Leg>,
}

impl<'g> Builder<'g> {
    fn push_edge(&mut self, e: usize) {
        let edge = self.g.edge(e);
        let start = self.samples.len() - 1;
        let junction = self.samples.pop().expect("builder starts with a sample");
        let offset = junction.time - edge.trajectory.start_time();
        self.samples.extend(edge.trajectory.samples.iter().map(|s| TrajectorySample {
            time: s.time + offset,
            ..*s
        }));
        self.legs.push(Leg {
            from_vertex: edge.from,
            to_vertex: edge.to,
            start_index: start,
            end_index: self.samples.len() - 1,
        });
    }

    fn push_path(&mut self, path: &[usize]) {
        for &e in path {
            self.push_edge(e);
        }
    }

    fn finish(self, speed: f64, terminal: Terminal) -> Trajectory {
        Trajectory {
            speed,
            samples: self.samples,
            terminal,
            legs: self.legs,
        }
    }
}

/// Initial viable trajectory: the minimum-radius loop through home, repeated.
pub fn initial_trajectory(g: &ReachGraph, t0: f64) -> Trajectory {
    let home = g.vertex(g.home_id()).state;
    let mut b = Builder {
        g,
        samples: vec![TrajectorySample {
            time: t0,
            state: home,
            control: crate::dynamics::PlannerControl::STRAIGHT,
        }],
        legs: Vec::new(),
    };
    b.push_edge(g.home_loop_edge());
    b.finish(g.params.speed, Terminal::HomeCycle { cycle_start: 0 })
}

/// Leg of `traj` being followed at absolute time `t`.
pub fn leg_at(traj: &Trajectory, t: f64) -> Option<&Leg> {
    let i = traj.index_at(t);
    let last = traj.samples.len() - 1;
    traj.legs
        .iter()
        .find(|l| l.start_index <= i && (i < l.end_index || (i == last && l.end_index == last)))
}

/// Vertices whose legs `traj` has completed by absolute time `t`.
pub fn reached_vertices(traj: &Trajectory, t: f64) -> Vec<usize> {
    let start = traj.start_time();
    let past_end = t >= traj.end_time() && traj.cycle_start().is_some();
    let mut out = vec![];
    if let Some(l) = traj.legs.first() {
        if t >= start {
            out.push(l.from_vertex);
        }
    }
    out.extend(
        traj.legs
            .iter()
            .filter(|l| past_end || traj.samples[l.end_index].time <= t)
            .map(|l| l.to_vertex),
    );
    out
}

/// Viable trajectory from the reference state of `previous` at time `t`:
/// finish the current edge, then go to the goal if it is in G_B, otherwise
/// visit an unvisited G_B vertex and settle into a loop between it and home.
/// With nothing left to visit the previous trajectory is kept.
pub fn request_trajectory(
    g: &ReachGraph,
    previous: &Trajectory,
    t: f64,
    policy: &mut ExplorationPolicy,
) -> Result<PlanResponse> {
    let goal_in_b = g.goal_id().filter(|&id| g.vertex(id).in_backward_set);
    let target = match goal_in_b {
        Some(_) => None,
        None => match select_unvisited(g, &g.goal_state(), policy) {
            Some(v) => Some(v),
            None => {
                return Ok(PlanResponse {
                    time: t,
                    kind: ResponseKind::Repeat,
                    trajectory: previous.clone(),
                })
            }
        },
    };

    let leg = *leg_at(previous, t)
        .ok_or_else(|| Error::Invariant(format!("reference at t={t} is not on a graph edge")))?;
    let w = leg.to_vertex;
    if !g.vertex(w).in_backward_set {
        return Err(Error::Invariant(format!("reference heads to vertex {w}, which is not in G_B")));
    }

    let tf = previous.fold_time(t);
    let offset = t - tf;
    let i = previous.index_at(t);
    let mut samples = vec![TrajectorySample {
        time: t,
        state: previous.state_at(t),
        control: previous.samples[i].control,
    }];
    samples.extend(
        previous.samples[i + 1..=leg.end_index]
            .iter()
            .filter(|s| s.time > tf)
            .map(|s| TrajectorySample {
                time: s.time + offset,
                ..*s
            }),
    );
    let mut b = Builder {
        g,
        legs: vec![Leg {
            from_vertex: leg.from_vertex,
            to_vertex: w,
            start_index: 0,
            end_index: samples.len() - 1,
        }],
        samples,
    };

    let route = |from: usize, to: usize| {
        g.shortest_path(from, to)
            .ok_or_else(|| Error::Invariant(format!("no path from vertex {from} to vertex {to} in the graph")))
    };
    let speed = g.params.speed;
    match (goal_in_b, target) {
        (Some(goal), _) => {
            b.push_path(&route(w, goal)?);
            Ok(PlanResponse {
                time: t,
                kind: ResponseKind::Goal,
                trajectory: b.finish(speed, Terminal::Goal),
            })
        }
        (None, Some(p_new)) => {
            let home = g.home_id();
            b.push_path(&route(w, p_new)?);
            let cycle_start = b.samples.len() - 1;
            b.push_path(&route(p_new, home)?);
            b.push_path(&route(home, p_new)?);
            Ok(PlanResponse {
                time: t,
                kind: ResponseKind::Explore { target: p_new },
                trajectory: b.finish(speed, Terminal::HomeCycle { cycle_start }),
            })
        }
        (None, None) => unreachable!("handled above"),
    }
}

/// Checks a response before it is issued: it starts at `reference`, every
/// leg is a stored edge whose end vertex is in G_B, it is known safe
/// against `map`, and it ends at the goal or in a closed loop through home.
pub fn verify_response(
    resp: &PlanResponse,
    reference: &PlannerState,
    g: &ReachGraph,
    map: &KnowledgeMap,
    fp: RobustFootprint,
) -> Result<()> {
    let traj = &resp.trajectory;
    let fail = |m: String| Err(Error::Invariant(m));
    if resp.kind != ResponseKind::Repeat && !traj.first_state().matches(reference) {
        return fail("response does not start at the reference".into());
    }
    if !map.trajectory_safe(traj, fp) {
        return fail(format!("response at t={} is not known safe", resp.time));
    }
    if let Some(l) = traj.legs.iter().find(|l| !g.vertex(l.to_vertex).in_backward_set) {
        return fail(format!("response passes vertex {} outside G_B", l.to_vertex));
    }
    let max_turn = g.params.speed / g.params.turn_radius;
    traj.validate(max_turn, 1e-6)?;
    match traj.terminal {
        Terminal::Goal => {
            if !traj.last_state().matches(&g.goal_state()) {
                return fail("goal-terminal response does not end at the goal".into());
            }
        }
        Terminal::HomeCycle { cycle_start } => {
            let home = g.home_id();
            let through_home = traj
                .legs
                .iter()
                .any(|l| l.start_index >= cycle_start && (l.to_vertex == home || l.from_vertex == home));
            if !through_home {
                return fail("cycle does not pass through home".into());
            }
        }
        Terminal::Open => return fail("response has no terminal guarantee".into()),
    }
    Ok(())
}
