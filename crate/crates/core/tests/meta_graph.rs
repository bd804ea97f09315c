mod common;

use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safexp::dynamics::{dubins_connect, propagate_planner, wrap_angle, PlannerControl, PlannerState};
use safexp::meta_graph::*;
use safexp::world::{Bounds, Circle, Environment, KnowledgeMap, RobustFootprint};

use common::oracles::*;

const INF: f64 = f64::INFINITY;

fn params() -> GraphParams {
    graph_params()
}

fn fp() -> RobustFootprint {
    footprint()
}

fn env(min: [f64; 2], max: [f64; 2], obstacles: Vec<Circle>, home: PlannerState, goal: PlannerState) -> Environment {
    Environment {
        bounds: Bounds::new(min, max).unwrap(),
        obstacles,
        home,
        goal,
    }
}

fn sensed(env: &Environment, at: &[([f64; 2], f64)]) -> KnowledgeMap {
    let mut map = KnowledgeMap::new(env.bounds);
    for &(p, r) in at {
        map.sense(p, env, r, 0.0).unwrap();
    }
    map
}

fn close(a: f64, b: f64) -> bool {
    costs_agree(a, b)
}

#[test]
fn first_expansion_from_home_costs_the_dubins_duration() {
    let home = PlannerState::new(5.0, 5.0, 0.0);
    let e = env([0.0, 0.0], [10.0, 10.0], vec![], home, PlannerState::new(9.0, 9.0, 0.0));
    let map = sensed(&e, &[([5.0, 5.0], 8.0)]);
    let mut g = ReachGraph::new(home, e.goal, params(), &map, fp()).unwrap();
    let p = PlannerState::new(8.0, 6.0, 1.0);
    let x = g.outbound_expand(p, &map, fp()).expect("open space");
    let direct = dubins_connect(&home, &p, 1.0, 1.0, 0.05, 0.0).unwrap().unwrap();
    assert_eq!(g.vertex(x.vertex).state, p);
    assert!((g.vertex(x.vertex).cost_from_home - direct.duration()).abs() < 1e-12);
    assert_eq!(g.edge(x.edge).from, g.home_id());
    assert!(!g.vertex(x.vertex).in_backward_set);
    assert!(x.promoted.is_empty());
}

#[test]
fn expansion_into_a_separate_sensed_pocket_fails() {
    let home = PlannerState::new(3.0, 5.0, 0.0);
    let e = env([0.0, 0.0], [20.0, 10.0], vec![], home, PlannerState::new(17.0, 5.0, 0.0));
    let map = sensed(&e, &[([3.0, 5.0], 3.0), ([16.0, 5.0], 3.0)]);
    let mut g = ReachGraph::new(home, e.goal, params(), &map, fp()).unwrap();
    let p = PlannerState::new(16.0, 5.0, 0.0);
    assert!(map.footprint_free(&p, fp()));
    assert!(g.outbound_expand(p, &map, fp()).is_none());
    assert!(g.try_goal(&map, fp()).is_none());
    assert_eq!(g.vertices().len(), 1);
}

#[test]
fn expansion_rejects_unfree_and_duplicate_candidates() {
    let home = PlannerState::new(5.0, 5.0, 0.0);
    let rock = Circle::new([8.0, 5.0], 0.5);
    let e = env([0.0, 0.0], [10.0, 10.0], vec![rock], home, PlannerState::new(9.0, 9.0, 0.0));
    let map = sensed(&e, &[([5.0, 5.0], 8.0)]);
    let mut g = ReachGraph::new(home, e.goal, params(), &map, fp()).unwrap();
    assert!(g.outbound_expand(PlannerState::new(8.0, 5.2, 0.0), &map, fp()).is_none());
    assert!(g.outbound_expand(home, &map, fp()).is_none());
    let p = PlannerState::new(5.0, 8.0, PI);
    assert!(g.outbound_expand(p, &map, fp()).is_some());
    assert!(g.outbound_expand(p, &map, fp()).is_none());
}

#[test]
fn consolidation_with_a_direct_return_promotes() {
    let home = PlannerState::new(5.0, 5.0, 0.0);
    let e = env([0.0, 0.0], [10.0, 10.0], vec![], home, PlannerState::new(9.0, 9.0, 0.0));
    let map = sensed(&e, &[([5.0, 5.0], 8.0)]);
    let mut g = ReachGraph::new(home, e.goal, params(), &map, fp()).unwrap();
    let v = g.outbound_expand(PlannerState::new(7.5, 6.0, PI / 2.0), &map, fp()).unwrap().vertex;
    let p = g.inbound_consolidate(v, &map, fp()).expect("open space");
    assert_eq!(p.promoted, vec![v]);
    assert_eq!(g.edge(p.edge).to, g.home_id());
    let back = dubins_connect(&g.vertex(v).state, &home, 1.0, 1.0, 0.05, 0.0).unwrap().unwrap();
    assert!((g.vertex(v).cost_to_home - back.duration()).abs() < 1e-12);
    assert!(g.inbound_consolidate(v, &map, fp()).is_none(), "already in G_B");
    g.check_invariants().unwrap();
}

#[test]
fn consolidating_a_descendant_promotes_its_ancestors() {
    // `a` faces the edge of the sensed disc and cannot turn back inside it;
    // `b` faces home.
    let home = PlannerState::new(0.0, 0.0, 0.0);
    let e = env([-10.0, -10.0], [10.0, 10.0], vec![], home, PlannerState::new(-8.0, -8.0, 0.0));
    let map = sensed(&e, &[([0.0, 0.0], 6.0)]);
    let mut g = ReachGraph::new(home, e.goal, params(), &map, fp()).unwrap();
    let a_state = PlannerState::new(5.3, 0.0, 0.0);
    let b_state = PlannerState::new(3.0, 1.0, PI);
    let a = g.insert_vertex(0, fake(home, a_state, 6.0), 0.0).unwrap().vertex;
    let b = g.insert_vertex(a, fake(a_state, b_state, 5.0), 0.0).unwrap().vertex;
    assert!(g.inbound_consolidate(a, &map, fp()).is_none());
    let p = g.inbound_consolidate(b, &map, fp()).expect("b faces home");
    assert_eq!(p.promoted, vec![b, a]);
    assert!(g.vertex(a).in_backward_set && g.vertex(b).in_backward_set);
    assert!(g.vertex(a).cost_to_home.is_finite());
    assert!((g.vertex(a).cost_to_home - (5.0 + g.vertex(b).cost_to_home)).abs() < 1e-12);
    g.check_invariants().unwrap();
}

#[test]
fn goal_insertion_promotes_its_ancestors() {
    let goal = slot(3);
    let mut g = abstract_graph(goal);
    let a = g.insert_vertex(0, fake(g.vertex(0).state, slot(1), 1.0), 0.0).unwrap().vertex;
    let b = g.insert_vertex(a, fake(slot(1), slot(2), 1.0), 0.0).unwrap().vertex;
    let x = g.insert_vertex(b, fake(slot(2), goal, 1.0), 0.0).unwrap();
    assert_eq!(g.goal_id(), Some(x.vertex));
    assert_eq!(x.promoted, vec![x.vertex, b, a]);
    assert_eq!(g.vertex(a).cost_to_goal, 2.0);
    assert!(g.vertex(a).cost_to_home.is_infinite());
    g.check_invariants().unwrap();
}

#[test]
fn backward_flags_match_reverse_search() {
    assert_eq!(backward_flag_mismatches(11, 50), 0);
}

#[test]
fn shortest_path_matches_exhaustive_enumeration() {
    let bad = shortest_path_mismatches(12, 60);
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn shortest_path_trivial_cases() {
    let mut g = abstract_graph(PlannerState::new(-5.0, -5.0, 0.0));
    let home = g.vertex(0).state;
    let a = g.insert_vertex(0, fake(home, slot(1), 1.0), 0.0).unwrap().vertex;
    let b = g.insert_vertex(0, fake(home, slot(2), 1.0), 0.0).unwrap().vertex;
    let t = g.insert_vertex(a, fake(slot(1), slot(3), 4.0), 0.0).unwrap().vertex;
    let short = g.insert_edge(b, t, fake(slot(2), slot(3), 2.0), 0.0).unwrap().edge;
    assert_eq!(g.shortest_path(a, a), Some(vec![]));
    let path = g.shortest_path(0, t).unwrap();
    assert_eq!(g.path_cost(&path), 3.0);
    assert_eq!(path.last(), Some(&short));
    assert_eq!(g.shortest_path(t, 0), None);
    assert_eq!(g.shortest_path(0, 99), None);
}

#[test]
fn incremental_costs_match_full_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..40 {
        let n = rng.gen_range(2..40);
        let extra = rng.gen_range(0..2 * n);
        let goal_slot = (trial % 3 != 0).then(|| rng.gen_range(1..n));
        let g = random_graph(&mut rng, n, extra, goal_slot);
        let edges = edge_list(&g);
        let from_home = distances(n, &edges, g.home_id(), false);
        let to_home = distances(n, &edges, g.home_id(), true);
        let to_goal = g.goal_id().map_or(vec![INF; n], |gid| distances(n, &edges, gid, true));
        for v in g.vertices() {
            assert!(close(v.cost_from_home, from_home[v.id]), "trial {trial} vertex {}", v.id);
            assert!(close(v.cost_to_home, to_home[v.id]), "trial {trial} vertex {}", v.id);
            assert!(close(v.cost_to_goal, to_goal[v.id]), "trial {trial} vertex {}", v.id);
        }
    }
}

#[test]
fn shortcut_relaxes_descendants_and_worse_edges_change_nothing() {
    let mut g = abstract_graph(PlannerState::new(-5.0, -5.0, 0.0));
    let home = g.vertex(0).state;
    let a = g.insert_vertex(0, fake(home, slot(1), 2.0), 0.0).unwrap().vertex;
    let v = g.insert_vertex(a, fake(slot(1), slot(2), 2.0), 0.0).unwrap().vertex;
    let w = g.insert_vertex(v, fake(slot(2), slot(3), 1.0), 0.0).unwrap().vertex;
    assert_eq!(g.vertex(v).cost_from_home, 4.0);
    g.insert_edge(0, v, fake(home, slot(2), 2.0), 0.0).unwrap();
    assert_eq!(g.vertex(v).cost_from_home, 2.0);
    assert_eq!(g.vertex(w).cost_from_home, 3.0);

    let before: Vec<Vertex> = g.vertices().to_vec();
    g.insert_edge(0, w, fake(home, slot(3), 10.0), 0.0).unwrap();
    assert_eq!(g.vertices(), &before[..]);
}

#[test]
fn insert_primitives_reject_mismatched_endpoints() {
    let mut g = abstract_graph(PlannerState::new(-5.0, -5.0, 0.0));
    let home = g.vertex(0).state;
    assert!(g.insert_vertex(0, fake(slot(5), slot(1), 1.0), 0.0).is_err());
    assert!(g.insert_vertex(7, fake(home, slot(1), 1.0), 0.0).is_err());
    let a = g.insert_vertex(0, fake(home, slot(1), 1.0), 0.0).unwrap().vertex;
    assert!(g.insert_vertex(0, fake(home, slot(1), 1.0), 0.0).is_err(), "duplicate");
    assert!(g.insert_edge(a, 0, fake(slot(1), slot(2), 1.0), 0.0).is_err());
    assert!(g.insert_edge(a, 3, fake(slot(1), home, 1.0), 0.0).is_err());
}

#[test]
fn sampling_needs_free_space() {
    let home = PlannerState::new(5.0, 5.0, 0.0);
    let rock = Circle::new([5.0, 5.0], 1.0);
    let e = env([0.0, 0.0], [10.0, 10.0], vec![rock], home, home);
    let blank = KnowledgeMap::new(e.bounds);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!((0..2000).all(|_| sample_candidate(&blank, fp(), &mut rng).is_none()));

    let map = sensed(&e, &[([5.0, 5.0], 3.0)]);
    for _ in 0..5000 {
        if let Some(p) = sample_candidate(&map, fp(), &mut rng) {
            assert!(map.footprint_free(&p, fp()));
            assert!(p.planar_distance(&home) > 1.0 + fp().radius);
            assert!(p.theta > -PI && p.theta <= PI);
        }
    }
}

#[test]
fn acceptance_rate_matches_eroded_disc_area() {
    let center = [4.0, 4.0];
    let r = 3.0;
    let e = env([0.0, 0.0], [8.0, 8.0], vec![], PlannerState::new(4.0, 4.0, 0.0), PlannerState::new(4.0, 4.0, 0.0));
    let map = sensed(&e, &[(center, r)]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draws = 100_000;
    let hits = (0..draws).filter(|_| sample_candidate(&map, fp(), &mut rng).is_some()).count();
    let rate = hits as f64 / draws as f64;
    let expected = PI * (r - fp().radius).powi(2) / e.bounds.area();
    assert!((rate / expected - 1.0).abs() < 0.02, "rate {rate}, area ratio {expected}");
}

#[test]
fn nearest_vertex_distance_shrinks_as_the_graph_densifies() {
    let home = PlannerState::new(5.0, 5.0, 0.0);
    let e = env([0.0, 0.0], [10.0, 10.0], vec![], home, PlannerState::new(-1.0, -1.0, 0.0));
    let map = sensed(&e, &[([5.0, 5.0], 8.0)]);
    let mut g = ReachGraph::new(home, e.goal, params(), &map, fp()).unwrap();
    let mut grow = ChaCha8Rng::seed_from_u64(3);
    let probes: Vec<PlannerState> = {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        std::iter::repeat_with(|| sample_candidate(&map, fp(), &mut rng)).flatten().take(2001).collect()
    };
    let median = |g: &ReachGraph| {
        let mut d: Vec<f64> = probes
            .iter()
            .map(|p| g.vertices().iter().map(|v| v.state.planar_distance(p)).fold(INF, f64::min))
            .collect();
        d.sort_by(f64::total_cmp);
        d[d.len() / 2]
    };
    let mut medians = Vec::new();
    for target in [50, 100, 200, 400] {
        while g.vertices().len() < target {
            if let Some(p) = sample_candidate(&map, fp(), &mut grow) {
                g.outbound_expand(p, &map, fp());
            }
        }
        medians.push(median(&g));
    }
    for w in medians.windows(2) {
        assert!(w[1] <= w[0], "medians {medians:?}");
    }
}

/// Forward reachability over known-free space by a search over short
/// constant-turn primitives, keeping one representative state per cell of a
/// position-heading lattice. The footprint is shrunk slightly so that the
/// search is at least as permissive as the graph's own checks.
struct Lattice {
    reached: Vec<PlannerState>,
}

const CELL: f64 = 0.15;
const BINS: usize = 32;
const STEP: f64 = 0.25;

impl Lattice {
    fn search(map: &KnowledgeMap, home: PlannerState, radius: f64) -> Self {
        let key = |p: &PlannerState| {
            let b = ((p.theta + PI) / (2.0 * PI) * BINS as f64).floor() as i64 % BINS as i64;
            ((p.x / CELL).floor() as i64, (p.y / CELL).floor() as i64, b)
        };
        let mut seen = HashSet::from([key(&home)]);
        let mut reached = vec![home];
        let mut queue = VecDeque::from([home]);
        while let Some(p) = queue.pop_front() {
            for rate in [-1.0, 0.0, 1.0] {
                let c = PlannerControl::new(rate);
                let free = (1..=4).all(|i| {
                    let q = propagate_planner(&p, c, 1.0, STEP * i as f64 / 4.0);
                    map.disc_free(q.position(), radius)
                });
                if !free {
                    continue;
                }
                let q = propagate_planner(&p, c, 1.0, STEP);
                if seen.insert(key(&q)) {
                    reached.push(q);
                    queue.push_back(q);
                }
            }
        }
        Self { reached }
    }

    fn covers(&self, p: &PlannerState) -> bool {
        self.reached
            .iter()
            .any(|q| q.planar_distance(p) <= 0.3 && wrap_angle(q.theta - p.theta).abs() <= 0.35)
    }
}

#[test]
fn lattice_search_stays_out_of_disconnected_pockets() {
    let home = PlannerState::new(3.0, 5.0, 0.0);
    let e = env([0.0, 0.0], [20.0, 10.0], vec![], home, home);
    let map = sensed(&e, &[([3.0, 5.0], 3.0), ([16.0, 5.0], 3.0)]);
    let lattice = Lattice::search(&map, home, fp().radius - 0.05);
    assert!(lattice.covers(&PlannerState::new(4.0, 5.5, 1.0)));
    assert!(lattice.reached.iter().all(|q| q.x < 6.0));
    assert!(!lattice.covers(&PlannerState::new(16.0, 5.0, 0.0)));
}

#[test]
fn expanded_vertices_are_lattice_reachable() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for world in 0..6 {
        let home = PlannerState::new(2.5, 5.0, 0.0);
        let mut obstacles = Vec::new();
        while obstacles.len() < 4 {
            let c = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
            let o = Circle::new(c, rng.gen_range(0.3..0.8));
            if o.distance_to_center([2.5, 6.0]) > o.radius + 1.5 {
                obstacles.push(o);
            }
        }
        let e = env([0.0, 0.0], [10.0, 10.0], obstacles, home, PlannerState::new(8.0, 5.0, 0.0));
        let mut spots = vec![([2.5, 5.0], 4.0)];
        for _ in 0..2 {
            spots.push(([rng.gen_range(2.0..8.0), rng.gen_range(2.0..8.0)], rng.gen_range(1.5..3.0)));
        }
        let map = sensed(&e, &spots);
        let mut g = ReachGraph::new(home, e.goal, params(), &map, fp()).unwrap();
        for _ in 0..4000 {
            if let Some(p) = sample_candidate(&map, fp(), &mut rng) {
                g.outbound_expand(p, &map, fp());
            }
        }
        let lattice = Lattice::search(&map, home, fp().radius - 0.05);
        for v in g.vertices() {
            assert!(lattice.covers(&v.state), "world {world}: vertex {} at {:?}", v.id, v.state);
        }
        checked += g.vertices().len();
    }
    assert!(checked > 300, "only {checked} vertices");
}

#[derive(Debug, Clone)]
enum Op {
    Sample,
    Goal,
    Consolidate(usize),
    Sense(f64, f64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        6 => Just(Op::Sample),
        1 => Just(Op::Goal),
        3 => any::<usize>().prop_map(Op::Consolidate),
        1 => (0.0..12.0, 0.0..8.0).prop_map(|(x, y)| Op::Sense(x, y)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn graph_only_grows_and_stays_viable(seed in any::<u64>(), ops in prop::collection::vec(op(), 50..200)) {
        let home = PlannerState::new(2.0, 4.0, 0.0);
        let goal = PlannerState::new(10.0, 4.0, 0.0);
        let rocks = vec![Circle::new([6.0, 4.0], 0.8), Circle::new([9.0, 1.5], 0.5), Circle::new([4.0, 7.0], 0.4)];
        let e = env([0.0, 0.0], [12.0, 8.0], rocks, home, goal);
        let mut map = sensed(&e, &[([2.0, 4.0], 4.0)]);
        let mut snapshots = HashMap::from([(map.time().to_bits(), map.clone())]);
        let mut g = ReachGraph::new(home, goal, params(), &map, fp()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = 0.0;
        for op in ops {
            let (nv, ne) = (g.vertices().len(), g.edges().len());
            let backward: Vec<usize> = g.vertices().iter().filter(|v| v.in_backward_set).map(|v| v.id).collect();
            match op {
                Op::Sample => {
                    if let Some(p) = sample_candidate(&map, fp(), &mut rng) {
                        g.outbound_expand(p, &map, fp());
                    }
                }
                Op::Goal => {
                    g.try_goal(&map, fp());
                }
                Op::Consolidate(i) => {
                    let open = g.forward_only();
                    if !open.is_empty() {
                        g.inbound_consolidate(open[i % open.len()], &map, fp());
                    }
                }
                Op::Sense(x, y) => {
                    t += 1.0;
                    map.sense([x, y], &e, 4.0, t).unwrap();
                    snapshots.insert(map.time().to_bits(), map.clone());
                }
            }
            prop_assert!(g.vertices().len() >= nv && g.edges().len() >= ne);
            prop_assert!(backward.iter().all(|&v| g.vertex(v).in_backward_set));
            g.check_invariants().unwrap();
            for v in g.vertices().iter().filter(|v| v.in_backward_set) {
                let back = g.shortest_path(v.id, g.home_id()).is_some()
                    || g.goal_id().is_some_and(|gid| g.shortest_path(v.id, gid).is_some());
                prop_assert!(back, "G_B vertex {} has no way back", v.id);
            }
        }
        for edge in g.edges() {
            let then = &snapshots[&edge.knowledge_stamp.to_bits()];
            prop_assert!(then.trajectory_safe(&edge.trajectory, fp()));
            prop_assert!(map.trajectory_safe(&edge.trajectory, fp()));
        }
    }
}

#[test]
fn long_random_walk_only_grows() {
    let r = growth_walk(3, 3000);
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    assert_eq!(r.steps, 3000);
    assert!(r.backward > 10 && r.free_probes > 100, "{r:?}");
}
