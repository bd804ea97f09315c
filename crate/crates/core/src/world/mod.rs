//! Static disc-obstacle world, omnidirectional range sensing, the incremental
//! knowledge map and the footprint safety predicates built on it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{PlannerState, Trajectory};
use crate::error::{Error, Result};

mod cover;

pub use cover::disc_in_union;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Circle {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn distance_to_center(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.center[0]).hypot(p[1] - self.center[1])
    }

    /// Closed-disc membership.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.distance_to_center(p) <= self.radius
    }

    pub fn contains_disc(&self, other: &Circle) -> bool {
        self.distance_to_center(other.center) + other.radius <= self.radius
    }

    /// True if the closed discs share at least one point.
    pub fn intersects(&self, other: &Circle) -> bool {
        self.distance_to_center(other.center) <= self.radius + other.radius
    }
}

/// Axis-aligned planar box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        if !(min[0] < max[0] && min[1] < max[1]) {
            return Err(Error::InvalidInput(format!("degenerate bounds {min:?}..{max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Whether the closed disc of `radius` around `c` stays inside.
    pub fn contains_disc(&self, c: [f64; 2], radius: f64) -> bool {
        (0..2).all(|a| c[a] - radius >= self.min[a] && c[a] + radius <= self.max[a])
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub bounds: Bounds,
    pub obstacles: Vec<Circle>,
    pub home: PlannerState,
    pub goal: PlannerState,
}

impl Environment {
    /// Checks obstacle radii and that home and goal footprints of
    /// `footprint_radius` fit inside the bounds.
    pub fn validate(&self, footprint_radius: f64) -> Result<()> {
        if let Some((i, o)) = self.obstacles.iter().enumerate().find(|(_, o)| !(o.radius > 0.0)) {
            return Err(Error::Config(format!("obstacle {i} has non-positive radius {}", o.radius)));
        }
        for (name, p) in [("home", &self.home), ("goal", &self.goal)] {
            if !p.is_finite() {
                return Err(Error::NonFinite("environment pose"));
            }
            if !self.bounds.contains_disc(p.position(), footprint_radius) {
                return Err(Error::Config(format!("{name} footprint leaves the bounds")));
            }
        }
        Ok(())
    }

    /// Whether a disc of `radius` at `p` overlaps a true obstacle or leaves
    /// the bounds.
    pub fn collides(&self, p: [f64; 2], radius: f64) -> bool {
        !self.bounds.contains_disc(p, radius)
            || self
                .obstacles
                .iter()
                .any(|o| o.distance_to_center(p) < o.radius + radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Free,
    Occupied,
    Unknown,
}

/// Physical footprint radius inflated by the tracking error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustFootprint {
    pub radius: f64,
}

impl RobustFootprint {
    pub fn new(robot_radius: f64, teb_radius: f64) -> Result<Self> {
        let radius = robot_radius + teb_radius;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("footprint radius must be positive, got {radius}")));
        }
        Ok(Self { radius })
    }
}

/// Uniform bucket grid over the bounds, listing the sensed discs whose
/// bounding boxes touch each cell.
#[derive(Debug, Clone)]
struct CellIndex {
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    cells: Vec<Vec<u32>>,
}

impl CellIndex {
    fn new(bounds: &Bounds, cell: f64) -> Self {
        let dims = [0, 1].map(|a| (((bounds.max[a] - bounds.min[a]) / cell).ceil() as usize).max(1));
        Self {
            origin: bounds.min,
            cell,
            dims,
            cells: vec![Vec::new(); dims[0] * dims[1]],
        }
    }

    fn range(&self, c: [f64; 2], r: f64) -> [(usize, usize); 2] {
        [0, 1].map(|a| {
            let lo = ((c[a] - r - self.origin[a]) / self.cell).floor();
            let hi = ((c[a] + r - self.origin[a]) / self.cell).floor();
            let clamp = |x: f64| x.clamp(0.0, (self.dims[a] - 1) as f64) as usize;
            (clamp(lo), clamp(hi))
        })
    }

    fn insert(&mut self, id: u32, disc: &Circle) {
        let [(x0, x1), (y0, y1)] = self.range(disc.center, disc.radius);
        for i in x0..=x1 {
            for j in y0..=y1 {
                self.cells[i * self.dims[1] + j].push(id);
            }
        }
    }

    fn query(&self, c: [f64; 2], r: f64) -> Vec<u32> {
        let [(x0, x1), (y0, y1)] = self.range(c, r);
        let mut out = Vec::new();
        for i in x0..=x1 {
            for j in y0..=y1 {
                out.extend_from_slice(&self.cells[i * self.dims[1] + j]);
            }
        }
        if (x0, y0) != (x1, y1) {
            out.sort_unstable();
            out.dedup();
        }
        out
    }
}

#[derive(Debug, Clone)]
struct MapData {
    bounds: Bounds,
    sensed: Vec<Circle>,
    index: CellIndex,
    /// Indices into the environment's obstacle list, ascending.
    discovered: Vec<usize>,
    discovered_obstacles: Vec<Circle>,
    time: f64,
    updates: u64,
    min_gain: f64,
}

/// What one sensing step changed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SenseUpdate {
    /// The sensing disc added area not already sensed.
    pub region_grew: bool,
    pub new_obstacles: Vec<usize>,
}

/// Knowledge of the world accumulated from past sensing. Cloning is cheap
/// and yields an immutable snapshot; updates copy on write.
#[derive(Debug, Clone)]
pub struct KnowledgeMap {
    data: Arc<MapData>,
}

/// Serializable view of a knowledge map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshot {
    pub time: f64,
    /// `[x, y, range]` per stored sensing disc.
    pub sensed: Vec<[f64; 3]>,
    pub discovered: Vec<usize>,
}

const DEFAULT_CELL: f64 = 2.0;

impl KnowledgeMap {
    /// Empty knowledge of a world with the given bounds.
    pub fn new(bounds: Bounds) -> Self {
        Self {
            data: Arc::new(MapData {
                bounds,
                sensed: Vec::new(),
                index: CellIndex::new(&bounds, DEFAULT_CELL),
                discovered: Vec::new(),
                discovered_obstacles: Vec::new(),
                time: 0.0,
                updates: 0,
                min_gain: 0.0,
            }),
        }
    }

    /// Empty map that stores a sensing disc only if the disc shrunk by
    /// `min_gain` is not already sensed. The sensed region then lags the
    /// sensor by less than `min_gain` but the stored disc count stays bounded
    /// while the sensor revisits known ground.
    pub fn with_min_gain(bounds: Bounds, min_gain: f64) -> Result<Self> {
        if !(min_gain >= 0.0 && min_gain.is_finite()) {
            return Err(Error::InvalidInput(format!("minimum sensing gain must be non-negative, got {min_gain}")));
        }
        let mut m = Self::new(bounds);
        Arc::make_mut(&mut m.data).min_gain = min_gain;
        Ok(m)
    }

    pub fn bounds(&self) -> &Bounds {
        &self.data.bounds
    }

    /// Stored sensing discs. Discs already inside the union of earlier ones
    /// are not stored, which leaves the sensed region unchanged.
    pub fn sensed(&self) -> &[Circle] {
        &self.data.sensed
    }

    pub fn discovered(&self) -> &[usize] {
        &self.data.discovered
    }

    pub fn discovered_obstacles(&self) -> &[Circle] {
        &self.data.discovered_obstacles
    }

    pub fn time(&self) -> f64 {
        self.data.time
    }

    /// Number of sensing calls applied so far.
    pub fn updates(&self) -> u64 {
        self.data.updates
    }

    /// Senses from `position` with the given `range` at time `t`: every
    /// obstacle meeting the sensing disc becomes known in full.
    pub fn sense(&mut self, position: [f64; 2], env: &Environment, range: f64, t: f64) -> Result<SenseUpdate> {
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::InvalidInput(format!("sensing range must be positive, got {range}")));
        }
        if !(position[0].is_finite() && position[1].is_finite() && t.is_finite()) {
            return Err(Error::NonFinite("sensing pose"));
        }
        let disc = Circle::new(position, range);
        let probe = Circle::new(position, range - self.data.min_gain);
        let region_grew = probe.radius <= 0.0 || !self.disc_sensed(&probe);
        let new_obstacles: Vec<usize> = env
            .obstacles
            .iter()
            .enumerate()
            .filter(|(i, o)| o.intersects(&disc) && self.data.discovered.binary_search(i).is_err())
            .map(|(i, _)| i)
            .collect();

        let data = Arc::make_mut(&mut self.data);
        if region_grew {
            let id = data.sensed.len() as u32;
            data.index.insert(id, &disc);
            data.sensed.push(disc);
        }
        for &i in &new_obstacles {
            let at = data.discovered.partition_point(|&k| k < i);
            data.discovered.insert(at, i);
            data.discovered_obstacles.insert(at, env.obstacles[i]);
        }
        data.time = data.time.max(t);
        data.updates += 1;
        Ok(SenseUpdate {
            region_grew,
            new_obstacles,
        })
    }

    fn nearby_sensed(&self, c: [f64; 2], r: f64) -> Vec<Circle> {
        self.data
            .index
            .query(c, r)
            .into_iter()
            .map(|id| self.data.sensed[id as usize])
            .collect()
    }

    /// Whether the closed disc lies inside the sensed region.
    pub fn disc_sensed(&self, disc: &Circle) -> bool {
        disc_in_union(disc, &self.nearby_sensed(disc.center, disc.radius))
    }

    pub fn label(&self, x: [f64; 2]) -> Label {
        if self.data.discovered_obstacles.iter().any(|o| o.contains(x)) {
            Label::Occupied
        } else if self.nearby_sensed(x, 0.0).iter().any(|d| d.contains(x)) {
            Label::Free
        } else {
            Label::Unknown
        }
    }

    /// Whether the closed disc of `radius` at `c` is entirely FREE and
    /// inside the bounds.
    pub fn disc_free(&self, c: [f64; 2], radius: f64) -> bool {
        self.data.bounds.contains_disc(c, radius)
            && self
                .data
                .discovered_obstacles
                .iter()
                .all(|o| o.distance_to_center(c) > o.radius + radius)
            && self.disc_sensed(&Circle::new(c, radius))
    }

    /// Whether the disc is inside the bounds and clear of every discovered
    /// obstacle, treating unknown space as free.
    pub fn disc_clear_of_known(&self, c: [f64; 2], radius: f64) -> bool {
        self.data.bounds.contains_disc(c, radius)
            && self
                .data
                .discovered_obstacles
                .iter()
                .all(|o| o.distance_to_center(c) > o.radius + radius)
    }

    pub fn footprint_free(&self, p: &PlannerState, fp: RobustFootprint) -> bool {
        self.disc_free(p.position(), fp.radius)
    }

    /// Footprint check at every sample with the radius grown by half the
    /// distance travelled between samples, which covers the motion in between.
    pub fn trajectory_safe(&self, xi: &Trajectory, fp: RobustFootprint) -> bool {
        let r = fp.radius + 0.5 * xi.speed * xi.max_spacing();
        xi.samples.iter().all(|s| self.disc_free(s.state.position(), r))
    }

    /// True if `self` holds at least the knowledge in `earlier`.
    pub fn extends(&self, earlier: &KnowledgeMap) -> bool {
        earlier.data.discovered.iter().all(|i| self.data.discovered.binary_search(i).is_ok())
            && earlier.data.sensed.iter().all(|d| self.disc_sensed(d))
    }

    pub fn snapshot(&self) -> MapSnapshot {
        MapSnapshot {
            time: self.data.time,
            sensed: self
                .data
                .sensed
                .iter()
                .map(|d| [d.center[0], d.center[1], d.radius])
                .collect(),
            discovered: self.data.discovered.clone(),
        }
    }
}

/// Functional form of [`KnowledgeMap::sense`]: returns the updated map and
/// leaves `map` untouched.
pub fn sense(position: [f64; 2], env: &Environment, map: &KnowledgeMap, range: f64, t: f64) -> Result<KnowledgeMap> {
    let mut next = map.clone();
    next.sense(position, env, range, t)?;
    Ok(next)
}

pub fn label(x: [f64; 2], map: &KnowledgeMap) -> Label {
    map.label(x)
}

pub fn footprint_free(p: &PlannerState, fp: RobustFootprint, map: &KnowledgeMap) -> bool {
    map.footprint_free(p, fp)
}

pub fn trajectory_safe(xi: &Trajectory, fp: RobustFootprint, map: &KnowledgeMap) -> bool {
    map.trajectory_safe(xi, fp)
}
