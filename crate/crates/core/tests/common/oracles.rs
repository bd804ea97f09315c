//! Independent reference computations shared by the module tests and the
//! acceptance run.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safexp::dynamics::{propagate_planner, Interval, PlannerControl, PlannerState, Terminal, Trajectory, TrajectorySample};
use safexp::meta_graph::{GraphParams, ReachGraph};
use safexp::reachability::{solve_value, solve_z_subsystem, SolverOptions, ValueGrid, ZGridSpec};
use safexp::world::{Bounds, Circle, Environment, KnowledgeMap, Label, RobustFootprint};

use super::{params, small_grid, G};

// ---------------------------------------------------------------------------
// Dubins

/// Shortest bounded-curvature path length found by shooting: the first arc
/// is scanned densely, each candidate is closed with a straight or a second
/// arc by elementary tangent geometry, and crossings of the closure residual
/// are refined by bisection.
pub fn dubins_shooting_length(from: &PlannerState, to: &PlannerState, r: f64) -> f64 {
    const SCAN: usize = 20_000;
    if from.matches(to) {
        return 0.0;
    }
    let turn = |a: f64| if a > TAU - 1e-7 { 0.0 } else { a };
    let left = |th: f64| [-th.sin(), th.cos()];
    let mut best = f64::INFINITY;
    for d1 in [1.0, -1.0] {
        let q = |a: f64| propagate_planner(from, PlannerControl::new(d1 / r), 1.0, r * a);
        // (last turn, middle is an arc?)
        for (d3, ccc) in [(1.0, false), (-1.0, false), (d1, true)] {
            let n3 = left(to.theta);
            let c3 = [to.x + d3 * r * n3[0], to.y + d3 * r * n3[1]];
            let d2 = -d1;
            let residual = |a: f64| {
                let p = q(a);
                if ccc {
                    let n = left(p.theta);
                    let c2 = [p.x + d2 * r * n[0], p.y + d2 * r * n[1]];
                    (c2[0] - c3[0]).hypot(c2[1] - c3[1]) - 2.0 * r
                } else {
                    let u = [p.theta.cos(), p.theta.sin()];
                    let w = [c3[0] - p.x, c3[1] - p.y];
                    u[0] * w[1] - u[1] * w[0] - d3 * r
                }
            };
            let close = |a: f64| -> Option<f64> {
                let p = q(a);
                if ccc {
                    let n = left(p.theta);
                    let c2 = [p.x + d2 * r * n[0], p.y + d2 * r * n[1]];
                    let m = [(c2[0] + c3[0]) / 2.0, (c2[1] + c3[1]) / 2.0];
                    let th_m = (m[1] - c2[1]).atan2(m[0] - c2[0]) + d2 * PI / 2.0;
                    let mid = turn((d2 * (th_m - p.theta)).rem_euclid(TAU));
                    let last = turn((d3 * (to.theta - th_m)).rem_euclid(TAU));
                    Some(r * (a + mid + last))
                } else {
                    let u = [p.theta.cos(), p.theta.sin()];
                    let s = u[0] * (c3[0] - p.x) + u[1] * (c3[1] - p.y);
                    if s < -1e-9 {
                        return None;
                    }
                    let last = turn((d3 * (to.theta - p.theta)).rem_euclid(TAU));
                    Some(r * a + s.max(0.0) + r * last)
                }
            };
            let step = TAU / SCAN as f64;
            let mut prev = residual(0.0);
            for k in 0..SCAN {
                let a0 = k as f64 * step;
                let a1 = a0 + step;
                let next = residual(a1);
                if prev.abs() < 1e-12 {
                    best = best.min(close(a0).unwrap_or(f64::INFINITY));
                } else if prev.signum() != next.signum() {
                    let (mut lo, mut hi, mut flo) = (a0, a1, prev);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let fm = residual(mid);
                        if fm.signum() == flo.signum() {
                            lo = mid;
                            flo = fm;
                        } else {
                            hi = mid;
                        }
                    }
                    best = best.min(close(0.5 * (lo + hi)).unwrap_or(f64::INFINITY));
                }
                prev = next;
            }
        }
    }
    best
}

pub fn random_pose(rng: &mut impl Rng, extent: f64) -> PlannerState {
    PlannerState::new(rng.gen_range(-extent..extent), rng.gen_range(-extent..extent), rng.gen_range(-PI..PI))
}

// ---------------------------------------------------------------------------
// Graphs

pub fn graph_params() -> GraphParams {
    GraphParams {
        speed: 1.0,
        turn_radius: 1.0,
        dt: 0.05,
        k: 5,
        heading_weight: 1.0,
    }
}

pub fn footprint() -> RobustFootprint {
    RobustFootprint::new(0.15, 0.1).unwrap()
}

/// Two-sample stand-in for an edge of the given duration; only its end
/// states and duration matter to the graph bookkeeping.
pub fn fake(from: PlannerState, to: PlannerState, cost: f64) -> Trajectory {
    let s = |time, state| TrajectorySample {
        time,
        state,
        control: PlannerControl::STRAIGHT,
    };
    Trajectory {
        speed: 1.0,
        samples: vec![s(0.0, from), s(cost, to)],
        terminal: Terminal::Open,
        legs: Vec::new(),
    }
}

/// Lone home at the origin in a large sensed world; abstract vertices sit
/// at [`slot`] positions far away so that they never coincide.
pub fn abstract_graph(goal: PlannerState) -> ReachGraph {
    let home = PlannerState::new(0.0, 0.0, 0.0);
    let bounds = Bounds::new([-10.0, -10.0], [200.0, 20.0]).unwrap();
    let env = Environment {
        bounds,
        obstacles: vec![],
        home,
        goal,
    };
    let mut map = KnowledgeMap::new(bounds);
    map.sense([0.0, 1.0], &env, 5.0, 0.0).unwrap();
    ReachGraph::new(home, goal, graph_params(), &map, footprint()).unwrap()
}

pub fn slot(i: usize) -> PlannerState {
    PlannerState::new(i as f64, 10.0, 0.0)
}

/// Random graph: a random spanning tree from home plus extra random edges.
/// With `goal_slot`, the vertex in that slot is the goal.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize, goal_slot: Option<usize>) -> ReachGraph {
    let goal = goal_slot.map_or(PlannerState::new(-5.0, -5.0, 0.0), slot);
    let mut g = abstract_graph(goal);
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let cost = rng.gen_range(0.5..5.0);
        let from = g.vertex(parent).state;
        g.insert_vertex(parent, fake(from, slot(i), cost), 0.0).unwrap();
    }
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let cost = rng.gen_range(0.5..5.0);
        let (sa, sb) = (g.vertex(a).state, g.vertex(b).state);
        g.insert_edge(a, b, fake(sa, sb, cost), 0.0).unwrap();
    }
    g
}

pub fn edge_list(g: &ReachGraph) -> Vec<(usize, usize, f64)> {
    g.edges().iter().map(|e| (e.from, e.to, e.cost)).collect()
}

/// Vertices with a directed path to home or the goal, by breadth-first
/// search against the edge direction.
pub fn reverse_reachable(g: &ReachGraph) -> Vec<bool> {
    let n = g.vertices().len();
    let mut reach = vec![false; n];
    let mut queue: VecDeque<usize> = [g.home_id()].into_iter().chain(g.goal_id()).collect();
    for &s in &queue {
        reach[s] = true;
    }
    while let Some(u) = queue.pop_front() {
        for e in g.edges().iter().filter(|e| e.to == u) {
            if !reach[e.from] {
                reach[e.from] = true;
                queue.push_back(e.from);
            }
        }
    }
    reach
}

/// Number of random graphs whose G_B flags differ from [`reverse_reachable`].
pub fn backward_flag_mismatches(seed: u64, graphs: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..graphs)
        .filter(|trial| {
            let n = rng.gen_range(2..40);
            let extra = rng.gen_range(0..n);
            let goal_slot = (trial % 2 == 0).then(|| rng.gen_range(1..n));
            let g = random_graph(&mut rng, n, extra, goal_slot);
            let flags: Vec<bool> = g.vertices().iter().map(|v| v.in_backward_set).collect();
            flags != reverse_reachable(&g) || g.check_invariants().is_err()
        })
        .count()
}

/// Cheapest simple path cost from `src` to every vertex, by enumerating all
/// simple paths.
pub fn enumerate_costs(n: usize, edges: &[(usize, usize, f64)], src: usize) -> Vec<f64> {
    fn walk(u: usize, cost: f64, out: &[Vec<(usize, f64)>], on: &mut [bool], best: &mut [f64]) {
        best[u] = best[u].min(cost);
        for &(v, w) in &out[u] {
            if !on[v] {
                on[v] = true;
                walk(v, cost + w, out, on, best);
                on[v] = false;
            }
        }
    }
    let mut out = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        out[a].push((b, w));
    }
    let mut best = vec![f64::INFINITY; n];
    let mut on = vec![false; n];
    on[src] = true;
    walk(src, 0.0, &out, &mut on, &mut best);
    best
}

pub fn costs_agree(a: f64, b: f64) -> bool {
    (a.is_infinite() && b.is_infinite() && a.signum() == b.signum()) || (a - b).abs() <= 1e-9 * (1.0 + a.abs())
}

/// Checks `shortest_path` on random graphs of up to 50 vertices against
/// [`enumerate_costs`]; returns descriptions of all disagreements.
pub fn shortest_path_mismatches(seed: u64, graphs: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = Vec::new();
    for trial in 0..graphs {
        let n = rng.gen_range(2..=50);
        let extra = rng.gen_range(0..=n.min(14));
        let g = random_graph(&mut rng, n, extra, None);
        let src = rng.gen_range(0..n);
        let best = enumerate_costs(n, &edge_list(&g), src);
        for to in 0..n {
            let ok = match g.shortest_path(src, to) {
                None => best[to].is_infinite(),
                Some(path) => {
                    let mut at = src;
                    let chained = path.iter().all(|&e| {
                        let ok = g.edge(e).from == at;
                        at = g.edge(e).to;
                        ok
                    });
                    chained && at == to && costs_agree(g.path_cost(&path), best[to])
                }
            };
            if !ok {
                bad.push(format!("graph {trial}: {src} -> {to}"));
            }
        }
    }
    bad
}

/// Bellman-Ford distances from `src`, along edges or against them.
pub fn distances(n: usize, edges: &[(usize, usize, f64)], src: usize, reverse: bool) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; n];
    d[src] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for &(a, b, w) in edges {
            let (a, b) = if reverse { (b, a) } else { (a, b) };
            if d[a] + w < d[b] {
                d[b] = d[a] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    d
}

// ---------------------------------------------------------------------------
// Footprints

/// Golden-angle spiral of interior points plus evenly spaced rim points,
/// 4096 in all.
pub fn disc_samples(c: [f64; 2], r: f64) -> Vec<[f64; 2]> {
    const RIM: usize = 1024;
    const INNER: usize = 3072;
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut pts = Vec::with_capacity(RIM + INNER);
    for k in 0..RIM {
        let a = TAU * k as f64 / RIM as f64;
        pts.push([c[0] + r * a.cos(), c[1] + r * a.sin()]);
    }
    for k in 0..INNER {
        let rho = r * ((k as f64 + 0.5) / INNER as f64).sqrt();
        let a = golden * k as f64;
        pts.push([c[0] + rho * a.cos(), c[1] + rho * a.sin()]);
    }
    pts
}

pub fn sampled_free(map: &KnowledgeMap, c: [f64; 2], r: f64) -> bool {
    disc_samples(c, r)
        .into_iter()
        .all(|p| map.bounds().contains(p) && map.label(p) == Label::Free)
}

pub struct Scene {
    pub env: Environment,
    pub poses: Vec<([f64; 2], f64)>,
    pub query: [f64; 2],
    pub radius: f64,
}

impl Scene {
    pub fn random(rng: &mut impl Rng) -> Self {
        let bounds = Bounds::new([0.0, 0.0], [10.0, 10.0]).unwrap();
        let query = [rng.gen_range(0.5..9.5), rng.gen_range(0.5..9.5)];
        let radius = rng.gen_range(0.1..1.0);
        let near = |rng: &mut ChaCha8Rng, spread: f64| {
            [query[0] + rng.gen_range(-spread..spread), query[1] + rng.gen_range(-spread..spread)]
        };
        let mut local = ChaCha8Rng::seed_from_u64(rng.gen());
        let obstacles = (0..local.gen_range(0..4))
            .map(|_| Circle::new(near(&mut local, 2.5), local.gen_range(0.2..1.0)))
            .collect();
        let poses = (0..local.gen_range(1..7))
            .map(|_| (near(&mut local, 2.0), local.gen_range(0.4..2.5)))
            .collect();
        let env = Environment {
            bounds,
            obstacles,
            home: PlannerState::new(1.0, 1.0, 0.0),
            goal: PlannerState::new(9.0, 9.0, 0.0),
        };
        Self {
            env,
            poses,
            query,
            radius,
        }
    }

    /// Map after sensing every pose, with sensed ranges, obstacle radii and
    /// bounds all moved by `margin` in the direction that shrinks FREE space.
    pub fn map(&self, margin: f64) -> KnowledgeMap {
        let mut env = self.env.clone();
        for o in &mut env.obstacles {
            o.radius += margin;
        }
        env.bounds = Bounds::new(env.bounds.min.map(|x| x + margin), env.bounds.max.map(|x| x - margin)).unwrap();
        let mut m = KnowledgeMap::new(env.bounds);
        for (k, &(p, range)) in self.poses.iter().enumerate() {
            m.sense(p, &env, range - margin, k as f64).unwrap();
        }
        m
    }
}

#[derive(Debug, Default)]
pub struct FootprintComparison {
    pub compared: usize,
    pub borderline: usize,
    pub free: usize,
    pub disagreements: usize,
}

/// Exact footprint test against the 4096-point sampling oracle on `scenes`
/// random scenes whose answer is stable when every boundary moves by
/// 0.03 m; closer calls are below the oracle's resolution and only counted.
pub fn compare_footprints(seed: u64, scenes: usize) -> FootprintComparison {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = 0.03;
    let mut c = FootprintComparison::default();
    while c.compared < scenes {
        let scene = Scene::random(&mut rng);
        let exact = scene.map(0.0).disc_free(scene.query, scene.radius);
        let pessimistic = scene.map(margin).disc_free(scene.query, scene.radius);
        let optimistic = scene.map(-margin).disc_free(scene.query, scene.radius);
        if pessimistic != optimistic {
            c.borderline += 1;
            continue;
        }
        let oracle = sampled_free(&scene.map(0.0), scene.query, scene.radius);
        c.disagreements += (exact != oracle) as usize;
        c.free += exact as usize;
        c.compared += 1;
    }
    c
}

// ---------------------------------------------------------------------------
// Value functions

/// Largest node-wise difference between the value and its mirror image under
/// reflection of the bearing and the normal velocity.
pub fn reflection_asymmetry(g: &ValueGrid) -> f64 {
    let [nd, np, nt, nn] = [0, 1, 2, 3].map(|d| g.axes[d].count);
    let mut worst: f64 = 0.0;
    for kd in 0..nd {
        for kp in 0..np {
            // Bearing nodes sit at (k - n/2) * h, so -psi is node (n - k) mod n.
            let kp_m = (np - kp) % np;
            for kt in 0..nt {
                for kn in 0..nn {
                    let a = g.value_at_index(&[kd, kp, kt, kn]);
                    let b = g.value_at_index(&[kd, kp_m, kt, nn - 1 - kn]);
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    worst
}

pub fn symmetric_config_asymmetry() -> f64 {
    reflection_asymmetry(&solve_value(&params(small_grid(10))).unwrap())
}

/// Mean absolute difference of two planar grids over interior probe points.
pub fn grid_gap(a: &ValueGrid, b: &ValueGrid) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 4000;
    let mut total = 0.0;
    for _ in 0..n {
        let x = [rng.gen_range(0.1..0.8), rng.gen_range(-PI..PI), rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)];
        total += (a.eval(&x) - b.eval(&x)).abs();
    }
    total / n as f64
}

/// Gaps between successive solutions on grids of 6, 12 and 24 nodes per axis.
pub fn refinement_gaps() -> [f64; 2] {
    let grids: Vec<ValueGrid> = [6, 12, 24].iter().map(|&n| solve_value(&params(small_grid(n))).unwrap()).collect();
    [grid_gap(&grids[0], &grids[1]), grid_gap(&grids[1], &grids[2])]
}

/// Nodes of the vertical value grid whose sublevel membership disagrees with
/// the closed-form braking parabola by more than one cell.
pub fn braking_parabola_misfits() -> Vec<String> {
    let a = 3.0;
    let spec = ZGridSpec::default();
    let thrust = Interval::new(G - a, G + a).unwrap();
    let (grid, _) = solve_z_subsystem(thrust, G, spec, &SolverOptions::default()).unwrap();
    let (hz, hv) = (grid.axes[0].spacing(), grid.axes[1].spacing());
    // Stopping height for upward motion under full braking.
    let exact = |z: f64, vz: f64| z + vz * vz / (2.0 * a);
    let mut bad = Vec::new();
    for level in [0.2, 0.35, 0.5] {
        for kz in 0..spec.z_count {
            for kv in 0..spec.vz_count {
                let (z, vz) = (grid.axes[0].node(kz), grid.axes[1].node(kv));
                if z < 0.0 || vz < 0.0 || exact(z, vz) > 0.9 * spec.z_max {
                    continue;
                }
                let inside = grid.value_at_index(&[kz, kv]) <= level;
                if inside != (exact(z, vz) <= level) {
                    let near = [-1.0, 0.0, 1.0].iter().any(|&dz| {
                        [-1.0, 0.0, 1.0].iter().any(|&dv| (exact(z + dz * hz, (vz + dv * hv).max(0.0)) <= level) == inside)
                    });
                    if !near {
                        bad.push(format!("level {level}: node ({z}, {vz})"));
                    }
                }
            }
        }
    }
    bad
}

// ---------------------------------------------------------------------------
// Monotone growth

#[derive(Debug, Default)]
pub struct GrowthReport {
    pub steps: usize,
    pub vertices: usize,
    pub edges: usize,
    pub backward: usize,
    pub free_probes: usize,
    pub failures: Vec<String>,
}

/// Random interleaving of sensing, sampling, goal attempts and
/// consolidation in a small world with three rocks. After every step the
/// graph sizes and G_B flags must not shrink and no probe label may change
/// except from UNKNOWN.
pub fn growth_walk(seed: u64, steps: usize) -> GrowthReport {
    let home = PlannerState::new(2.0, 4.0, 0.0);
    let goal = PlannerState::new(10.0, 4.0, 0.0);
    let bounds = Bounds::new([0.0, 0.0], [12.0, 8.0]).unwrap();
    let env = Environment {
        bounds,
        obstacles: vec![Circle::new([6.0, 4.0], 0.8), Circle::new([9.0, 1.5], 0.5), Circle::new([4.0, 7.0], 0.4)],
        home,
        goal,
    };
    let fp = footprint();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = KnowledgeMap::new(bounds);
    map.sense([2.0, 4.0], &env, 4.0, 0.0).unwrap();
    let mut g = ReachGraph::new(home, goal, graph_params(), &map, fp).unwrap();
    let probes: Vec<[f64; 2]> = (0..400).map(|_| [rng.gen_range(0.0..12.0), rng.gen_range(0.0..8.0)]).collect();
    let mut labels: Vec<Label> = probes.iter().map(|&p| map.label(p)).collect();
    let mut backward: Vec<bool> = Vec::new();
    let mut report = GrowthReport::default();
    let mut t = 0.0;
    for step in 0..steps {
        let (nv, ne) = (g.vertices().len(), g.edges().len());
        match rng.gen_range(0..11) {
            0..=5 => {
                if let Some(p) = safexp::meta_graph::sample_candidate(&map, fp, &mut rng) {
                    g.outbound_expand(p, &map, fp);
                }
            }
            6 => {
                g.try_goal(&map, fp);
            }
            7..=9 => {
                let open = g.forward_only();
                if !open.is_empty() {
                    let v = open[rng.gen_range(0..open.len())];
                    g.inbound_consolidate(v, &map, fp);
                }
            }
            _ => {
                t += 1.0;
                let at = [rng.gen_range(0.0..12.0), rng.gen_range(0.0..8.0)];
                map.sense(at, &env, rng.gen_range(1.0..4.0), t).unwrap();
            }
        }
        let mut fail = |m: String| report.failures.push(format!("step {step}: {m}"));
        if g.vertices().len() < nv || g.edges().len() < ne {
            fail("graph shrank".into());
        }
        let flags: Vec<bool> = g.vertices().iter().map(|v| v.in_backward_set).collect();
        if backward.iter().zip(&flags).any(|(&was, &now)| was && !now) {
            fail("vertex left G_B".into());
        }
        backward = flags;
        for (i, &x) in probes.iter().enumerate() {
            let now = map.label(x);
            if labels[i] != now && labels[i] != Label::Unknown {
                fail(format!("label of {x:?} went {:?} -> {now:?}", labels[i]));
            }
            labels[i] = now;
        }
        if step % 500 == 0 {
            if let Err(e) = g.check_invariants() {
                fail(e.to_string());
            }
        }
        if report.failures.len() > 20 {
            break;
        }
        report.steps = step + 1;
    }
    if let Err(e) = g.check_invariants() {
        report.failures.push(e.to_string());
    }
    report.vertices = g.vertices().len();
    report.edges = g.edges().len();
    report.backward = g.backward_count();
    report.free_probes = labels.iter().filter(|&&l| l == Label::Free).count();
    report
}
