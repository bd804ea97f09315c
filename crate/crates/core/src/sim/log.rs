//! JSON-lines run log: a header line followed by one record per line.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta_graph::{EdgeRecord, VertexRecord};
use crate::reachability::TrackingBound;

pub const SCHEMA: &str = "safexp-runlog";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub version: u32,
    pub scenario: String,
    pub mode: String,
    pub seed: u64,
    pub bounds: [[f64; 2]; 2],
    pub home: [f64; 3],
    pub goal: [f64; 3],
    pub sensing_range: f64,
    pub robot_radius: f64,
    pub footprint_radius: f64,
    pub flight_height: f64,
    pub bound: TrackingBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleRecord {
    pub id: usize,
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// The vehicle's footprint met a true obstacle or left the bounds.
    Collision,
    /// Planar tracking error above the bound.
    TrackingBound,
    /// Height error above the vertical bound.
    VerticalBound,
    /// A response failed its safety or terminal checks.
    UnsafeResponse,
    /// No viable response could be built.
    NonViable,
    /// A graph invariant failed.
    GraphInvariant,
    /// The optimistic planner found no path from its current state.
    Trapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Timeout,
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Record {
    /// Velocity-minimized planar value on the `(d, psi)` nodes.
    ValueProjection {
        t: f64,
        d: Vec<f64>,
        psi: Vec<f64>,
        values: Vec<f64>,
        level: f64,
    },
    SensorUpdate {
        t: f64,
        position: [f64; 2],
        range: f64,
        region_grew: bool,
        new_obstacles: Vec<ObstacleRecord>,
    },
    GraphDelta {
        t: f64,
        vertices: Vec<VertexRecord>,
        edges: Vec<EdgeRecord>,
        promoted: Vec<usize>,
        visited: Vec<usize>,
    },
    PlanResponse {
        t: f64,
        kind: String,
        target: Option<usize>,
        terminal: String,
        duration: f64,
        polyline: Vec<[f64; 2]>,
    },
    TrackerSample {
        t: f64,
        state: [f64; 6],
        reference: [f64; 3],
        relative: [f64; 4],
        /// Interpolated planar value; absent outside the grid.
        value: Option<f64>,
        distance: f64,
        z_error: f64,
    },
    Violation {
        t: f64,
        kind: ViolationKind,
        detail: String,
    },
    Termination {
        t: f64,
        outcome: Outcome,
        ticks: usize,
        vertices: usize,
        backward: usize,
        edges: usize,
        violations: usize,
    },
}

impl Record {
    pub fn time(&self) -> f64 {
        match self {
            Record::ValueProjection { t, .. }
            | Record::SensorUpdate { t, .. }
            | Record::GraphDelta { t, .. }
            | Record::PlanResponse { t, .. }
            | Record::TrackerSample { t, .. }
            | Record::Violation { t, .. }
            | Record::Termination { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub header: LogHeader,
    pub records: Vec<Record>,
}

impl RunLog {
    pub fn violations(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| matches!(r, Record::Violation { .. }))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let io = |e: std::io::Error| Error::io("<run log>", e);
        let json = |e: serde_json::Error| Error::Log {
            line: 0,
            message: e.to_string(),
        };
        writeln!(w, "{}", serde_json::to_string(&self.header).map_err(json)?).map_err(io)?;
        for r in &self.records {
            writeln!(w, "{}", serde_json::to_string(r).map_err(json)?).map_err(io)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Parses a log, checking the header schema and that record times never
    /// decrease.
    pub fn parse(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, first) = lines.next().ok_or(Error::Log {
            line: 1,
            message: "empty log".into(),
        })?;
        let first = first.map_err(|e| Error::Log {
            line: 1,
            message: e.to_string(),
        })?;
        let header: LogHeader = serde_json::from_str(&first).map_err(|e| Error::Log {
            line: 1,
            message: e.to_string(),
        })?;
        if header.schema != SCHEMA || header.version != VERSION {
            return Err(Error::Log {
                line: 1,
                message: format!("unsupported schema {} v{}", header.schema, header.version),
            });
        }
        let mut records = Vec::new();
        let mut last_t = f64::NEG_INFINITY;
        for (i, line) in lines {
            let line = line.map_err(|e| Error::Log {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Log {
                line: i + 1,
                message: e.to_string(),
            })?;
            if rec.time() < last_t {
                return Err(Error::Log {
                    line: i + 1,
                    message: format!("time goes backwards ({} < {last_t})", rec.time()),
                });
            }
            last_t = rec.time();
            records.push(rec);
        }
        Ok(Self { header, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(std::io::BufReader::new(f))
    }
}
