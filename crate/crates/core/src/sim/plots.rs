//! Post-hoc artifacts from a run log: world snapshots per epoch, the value
//! heatmap and a metrics summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::log::{Outcome, Record, RunLog};
use crate::error::{Error, Result};

/// Default snapshot spacing [s].
pub const EPOCH: f64 = 10.0;
/// Epochs are widened beyond this many snapshots.
pub const MAX_SNAPSHOTS: usize = 40;
/// Raster cell used for the explored-area series [m].
const AREA_CELL: f64 = 0.1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub outcome: Option<Outcome>,
    pub ticks: usize,
    pub ticks_to_goal: Option<usize>,
    pub end_time: Option<f64>,
    pub vertices: usize,
    pub backward: usize,
    pub edges: usize,
    pub responses: usize,
    pub violations: usize,
    pub max_tracking_error: Option<f64>,
    pub max_z_error: Option<f64>,
    /// `(t, area)` after each sensing update that grew the sensed region.
    pub explored_area: Vec<[f64; 2]>,
}

/// Summarizes a log without writing anything.
pub fn metrics(log: &RunLog) -> Metrics {
    let mut m = Metrics::default();
    let mut area = AreaRaster::new(log.header.bounds);
    let mut max_err: Option<f64> = None;
    let mut max_z: Option<f64> = None;
    for r in &log.records {
        match r {
            Record::TrackerSample { distance, z_error, .. } => {
                m.ticks += 1;
                max_err = Some(max_err.map_or(*distance, |e| e.max(*distance)));
                max_z = Some(max_z.map_or(z_error.abs(), |e| e.max(z_error.abs())));
            }
            Record::SensorUpdate {
                t,
                position,
                range,
                region_grew: true,
                ..
            } => {
                area.add(*position, *range);
                m.explored_area.push([*t, area.area()]);
            }
            Record::PlanResponse { .. } => m.responses += 1,
            Record::Violation { .. } => m.violations += 1,
            Record::Termination {
                t,
                outcome,
                ticks,
                vertices,
                backward,
                edges,
                ..
            } => {
                m.outcome = Some(*outcome);
                m.end_time = Some(*t);
                m.vertices = *vertices;
                m.backward = *backward;
                m.edges = *edges;
                if *outcome == Outcome::Success {
                    m.ticks_to_goal = Some(*ticks);
                }
            }
            _ => {}
        }
    }
    m.max_tracking_error = max_err;
    m.max_z_error = max_z;
    m
}

struct AreaRaster {
    min: [f64; 2],
    dims: [usize; 2],
    cells: Vec<bool>,
    count: usize,
}

impl AreaRaster {
    fn new(b: [[f64; 2]; 2]) -> Self {
        let dims = [0, 1].map(|a| ((b[1][a] - b[0][a]) / AREA_CELL).ceil().max(0.0) as usize);
        Self {
            min: b[0],
            dims,
            cells: vec![false; dims[0] * dims[1]],
            count: 0,
        }
    }

    fn add(&mut self, c: [f64; 2], r: f64) {
        let lo = [0, 1].map(|a| (((c[a] - r - self.min[a]) / AREA_CELL).floor().max(0.0)) as usize);
        let hi = [0, 1].map(|a| (((c[a] + r - self.min[a]) / AREA_CELL).ceil().max(0.0) as usize).min(self.dims[a]));
        for i in lo[0]..hi[0] {
            for j in lo[1]..hi[1] {
                let x = self.min[0] + (i as f64 + 0.5) * AREA_CELL;
                let y = self.min[1] + (j as f64 + 0.5) * AREA_CELL;
                let k = i * self.dims[1] + j;
                if !self.cells[k] && (x - c[0]).hypot(y - c[1]) <= r {
                    self.cells[k] = true;
                    self.count += 1;
                }
            }
        }
    }

    fn area(&self) -> f64 {
        self.count as f64 * AREA_CELL * AREA_CELL
    }
}

/// Epoch end times covering the tracker samples: one per `EPOCH` seconds,
/// widened so there are at most `MAX_SNAPSHOTS`.
pub fn epoch_times(log: &RunLog) -> Vec<f64> {
    let times: Vec<f64> = log
        .records
        .iter()
        .filter_map(|r| match r {
            Record::TrackerSample { t, .. } => Some(*t),
            _ => None,
        })
        .collect();
    let Some(&last) = times.last() else {
        return Vec::new();
    };
    let mut epoch = EPOCH;
    while (last / epoch).ceil() as usize > MAX_SNAPSHOTS {
        epoch *= 2.0;
    }
    let n = ((last / epoch).ceil() as usize).max(1);
    (1..=n).map(|k| (k as f64 * epoch).min(last)).collect()
}

/// Writes `snapshot_NNN.svg` per epoch, `value.svg` if the log carries a
/// value projection, and `metrics.json`. Returns the written paths.
pub fn emit_plots(log: &RunLog, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        let p = out.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    for (k, t) in epoch_times(log).into_iter().enumerate() {
        write(format!("snapshot_{k:03}.svg"), snapshot_svg(log, t))?;
    }
    if let Some(svg) = value_svg(log) {
        write("value.svg".into(), svg)?;
    }
    let m = serde_json::to_string_pretty(&metrics(log)).map_err(|e| Error::Log {
        line: 0,
        message: e.to_string(),
    })?;
    write("metrics.json".into(), m)?;
    Ok(written)
}

const SCALE: f64 = 30.0;

struct Canvas {
    min: [f64; 2],
    max: [f64; 2],
    body: String,
}

impl Canvas {
    fn new(b: [[f64; 2]; 2]) -> Self {
        Self {
            min: b[0],
            max: b[1],
            body: String::new(),
        }
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        ((p[0] - self.min[0]) * SCALE, (self.max[1] - p[1]) * SCALE)
    }

    fn circle(&mut self, c: [f64; 2], r: f64, style: &str) {
        let (x, y) = self.px(c);
        let _ = writeln!(self.body, r#"<circle cx="{x:.1}" cy="{y:.1}" r="{:.1}" {style}/>"#, r * SCALE);
    }

    fn polyline(&mut self, pts: &[[f64; 2]], style: &str) {
        if pts.len() < 2 {
            return;
        }
        let mut d = String::new();
        for p in pts {
            let (x, y) = self.px(*p);
            let _ = write!(d, "{x:.1},{y:.1} ");
        }
        let _ = writeln!(self.body, r#"<polyline points="{}" fill="none" {style}/>"#, d.trim_end());
    }

    fn finish(self, title: &str) -> String {
        let w = (self.max[0] - self.min[0]) * SCALE;
        let h = (self.max[1] - self.min[1]) * SCALE;
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{:.0}\" viewBox=\"0 0 {w:.0} {:.0}\">\n\
             <rect x=\"0\" y=\"0\" width=\"{w:.0}\" height=\"{h:.0}\" fill=\"#d9d9d9\" stroke=\"black\"/>\n\
             {}<text x=\"4\" y=\"{:.0}\" font-size=\"14\" font-family=\"sans-serif\">{title}</text>\n</svg>\n",
            h + 20.0,
            h + 20.0,
            self.body,
            h + 16.0
        )
    }
}

/// World as known at time `t`: sensed region, discovered obstacles, graph
/// edges (G_B in blue), executed tracker path and the active reference.
pub fn snapshot_svg(log: &RunLog, t: f64) -> String {
    let h = &log.header;
    let mut c = Canvas::new(h.bounds);
    let mut sensed = Vec::new();
    let mut obstacles = BTreeMap::new();
    let mut edges: BTreeMap<usize, (usize, Vec<[f64; 2]>)> = BTreeMap::new();
    let mut backward = std::collections::BTreeSet::new();
    let mut path = Vec::new();
    let mut reference: Option<&Vec<[f64; 2]>> = None;
    for r in log.records.iter().take_while(|r| r.time() <= t + 1e-9) {
        match r {
            Record::SensorUpdate {
                position,
                range,
                region_grew,
                new_obstacles,
                ..
            } => {
                if *region_grew {
                    sensed.push((*position, *range));
                }
                for o in new_obstacles {
                    obstacles.insert(o.id, (o.center, o.radius));
                }
            }
            Record::GraphDelta {
                vertices,
                edges: new_edges,
                promoted,
                ..
            } => {
                for v in vertices.iter().filter(|v| v.in_backward_set) {
                    backward.insert(v.id);
                }
                backward.extend(promoted.iter().copied());
                for e in new_edges {
                    edges.insert(e.id, (e.from, e.polyline.clone()));
                }
            }
            Record::TrackerSample { state, .. } => path.push([state[0], state[1]]),
            Record::PlanResponse { polyline, .. } => reference = Some(polyline),
            _ => {}
        }
    }
    for (p, r) in &sensed {
        c.circle(*p, *r, r##"fill="#ffffff" stroke="none""##);
    }
    for (p, r) in obstacles.values() {
        c.circle(*p, *r, r##"fill="#404040" stroke="none""##);
    }
    for (from, pl) in edges.values() {
        let style = if backward.contains(from) {
            r##"stroke="#1f5fbf" stroke-width="1.2""##
        } else {
            r##"stroke="#9a9a9a" stroke-width="0.8""##
        };
        c.polyline(pl, style);
    }
    if let Some(pl) = reference {
        c.polyline(pl, r##"stroke="#2e9e3e" stroke-width="1" stroke-dasharray="4 3""##);
    }
    c.polyline(&path, r##"stroke="#d02020" stroke-width="1.5""##);
    c.circle([h.home[0], h.home[1]], 0.25, r##"fill="#1f5fbf""##);
    c.circle([h.goal[0], h.goal[1]], 0.25, r##"fill="#e0a000""##);
    c.finish(&format!("{} ({}) t = {t:.1} s", h.scenario, h.mode))
}

/// Velocity-minimized planar value over the displacement plane, with the
/// tracking bound drawn as a circle.
pub fn value_svg(log: &RunLog) -> Option<String> {
    let (d, psi, values, level) = log.records.iter().find_map(|r| match r {
        Record::ValueProjection {
            d, psi, values, level, ..
        } => Some((d, psi, values, *level)),
        _ => None,
    })?;
    if d.is_empty() || psi.is_empty() || values.len() != d.len() * psi.len() {
        return None;
    }
    let dh = if d.len() > 1 { d[1] - d[0] } else { 2.0 * d[0] };
    let d_max = d[d.len() - 1] + 0.5 * dh;
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let n = 80;
    let px = 6.0;
    let mut body = String::new();
    let dpsi = std::f64::consts::TAU / psi.len() as f64;
    for i in 0..n {
        for j in 0..n {
            let x = -d_max + (i as f64 + 0.5) * 2.0 * d_max / n as f64;
            let y = d_max - (j as f64 + 0.5) * 2.0 * d_max / n as f64;
            let r = x.hypot(y);
            if r > d_max {
                continue;
            }
            let a = y.atan2(x);
            let di = ((r / dh).floor() as usize).min(d.len() - 1);
            let pi = (((a - psi[0]) / dpsi).round().rem_euclid(psi.len() as f64)) as usize % psi.len();
            let v = values[di * psi.len() + pi];
            let s = if v.is_finite() { (v - lo) / span } else { 1.0 };
            let (cr, cg, cb) = (
                (255.0 * s) as u8,
                (255.0 * (1.0 - (2.0 * s - 1.0).abs())) as u8,
                (255.0 * (1.0 - s)) as u8,
            );
            let stroke = if v <= level { r#" stroke="black" stroke-width="0.3""# } else { "" };
            let _ = writeln!(
                body,
                r#"<rect x="{:.1}" y="{:.1}" width="{px}" height="{px}" fill="rgb({cr},{cg},{cb})"{stroke}/>"#,
                i as f64 * px,
                j as f64 * px
            );
        }
    }
    let size = n as f64 * px;
    let centre = size / 2.0;
    let teb = log.header.bound.radius / d_max * centre;
    Some(format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size:.0}\" height=\"{:.0}\">\n{body}\
         <circle cx=\"{centre:.1}\" cy=\"{centre:.1}\" r=\"{teb:.1}\" fill=\"none\" stroke=\"white\" stroke-width=\"2\"/>\n\
         <text x=\"4\" y=\"{:.0}\" font-size=\"14\" font-family=\"sans-serif\">min over velocity, level {level:.4}, range [{lo:.3}, {hi:.3}]</text>\n</svg>\n",
        size + 20.0,
        size + 16.0
    ))
}
