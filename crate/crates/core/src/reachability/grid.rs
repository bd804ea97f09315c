//! Dense value grids: axis layout, multilinear interpolation, gradients and
//! the binary cache artifact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How an axis behaves at and beyond its ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisKind {
    /// Nodes span `[min, max]` inclusive; queries outside are clamped and the
    /// solver extrapolates linearly.
    Clamped,
    /// Nodes cover `[min, max)` and wrap around.
    Periodic,
    /// Polar radius over `[0, max]` with cell-centred nodes. Below the first
    /// node the neighbour is the same radius on the opposite side of the
    /// origin, i.e. the angle axis shifted by half a turn.
    Radial { angle_axis: usize },
}

impl AxisKind {
    fn code(self) -> (u32, u32) {
        match self {
            AxisKind::Clamped => (0, 0),
            AxisKind::Periodic => (1, 0),
            AxisKind::Radial { angle_axis } => (2, angle_axis as u32),
        }
    }

    fn from_code(code: u32, extra: u32) -> Result<Self> {
        match code {
            0 => Ok(AxisKind::Clamped),
            1 => Ok(AxisKind::Periodic),
            2 => Ok(AxisKind::Radial {
                angle_axis: extra as usize,
            }),
            _ => Err(Error::Artifact(format!("unknown axis kind {code}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub kind: AxisKind,
}

impl Axis {
    pub fn clamped(min: f64, max: f64, count: usize) -> Self {
        Self {
            min,
            max,
            count,
            kind: AxisKind::Clamped,
        }
    }

    pub fn periodic(min: f64, max: f64, count: usize) -> Self {
        Self {
            min,
            max,
            count,
            kind: AxisKind::Periodic,
        }
    }

    pub fn radial(max: f64, count: usize, angle_axis: usize) -> Self {
        Self {
            min: 0.0,
            max,
            count,
            kind: AxisKind::Radial { angle_axis },
        }
    }

    pub fn spacing(&self) -> f64 {
        match self.kind {
            AxisKind::Clamped => (self.max - self.min) / (self.count - 1) as f64,
            AxisKind::Periodic | AxisKind::Radial { .. } => (self.max - self.min) / self.count as f64,
        }
    }

    fn center(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    /// Coordinate of node `k`. Computed about the axis centre so that
    /// symmetric axes have exactly mirrored nodes.
    pub fn node(&self, k: usize) -> f64 {
        let h = self.spacing();
        match self.kind {
            AxisKind::Clamped => self.center() + (k as f64 - 0.5 * (self.count - 1) as f64) * h,
            AxisKind::Periodic => self.center() + (k as f64 - 0.5 * self.count as f64) * h,
            AxisKind::Radial { .. } => (k as f64 + 0.5) * h,
        }
    }

    /// Lowest and highest node coordinates.
    pub fn node_range(&self) -> (f64, f64) {
        (self.node(0), self.node(self.count - 1))
    }

    pub(crate) fn validate(&self, dims: usize, min_count: usize) -> Result<()> {
        if self.count < min_count {
            return Err(Error::InvalidInput(format!(
                "axis needs at least {min_count} nodes, got {}",
                self.count
            )));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.max > self.min) {
            return Err(Error::InvalidInput(format!(
                "axis range [{}, {}] is empty or non-finite",
                self.min, self.max
            )));
        }
        if let AxisKind::Radial { angle_axis } = self.kind {
            if angle_axis >= dims {
                return Err(Error::InvalidInput("radial axis refers to a missing angle axis".into()));
            }
        }
        Ok(())
    }
}

/// Per-axis interpolation stencil: two node indices, the weight of the upper
/// one, and whether the lower node is taken across the polar origin.
#[derive(Debug, Clone, Copy)]
struct Bracket {
    lo: usize,
    hi: usize,
    w: f64,
    lo_reflected: bool,
}

/// Value function samples on a rectilinear grid (row-major, last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGrid {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
    /// Largest per-sweep update when the solver stopped.
    pub converged_residual: f64,
    /// Key of the dynamics parameters the grid was solved for.
    pub params_key: u64,
}

const MAGIC: &[u8; 8] = b"SXVGRID1";

impl ValueGrid {
    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.axes)
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    /// Multi-index of a flat index.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims()];
        for (d, ax) in self.axes.iter().enumerate().rev() {
            out[d] = flat % ax.count;
            flat /= ax.count;
        }
        out
    }

    pub fn node_coords(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.axes).map(|(&k, ax)| ax.node(k)).collect()
    }

    pub fn value_at_index(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    /// True if the query lies inside the node hull on every clamped axis.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes.iter().zip(x).all(|(ax, &v)| match ax.kind {
            AxisKind::Clamped => v >= ax.min && v <= ax.max,
            AxisKind::Periodic => true,
            AxisKind::Radial { .. } => v >= 0.0 && v <= ax.node(ax.count - 1),
        })
    }

    fn bracket(ax: &Axis, x: f64) -> Bracket {
        let h = ax.spacing();
        let n = ax.count;
        match ax.kind {
            AxisKind::Clamped => {
                let s = ((x - ax.node(0)) / h).clamp(0.0, (n - 1) as f64);
                let lo = (s.floor() as usize).min(n - 2);
                Bracket {
                    lo,
                    hi: lo + 1,
                    w: s - lo as f64,
                    lo_reflected: false,
                }
            }
            AxisKind::Periodic => {
                let period = ax.max - ax.min;
                let s = (x - ax.node(0)).rem_euclid(period) / h;
                let lo = (s.floor() as usize).min(n - 1);
                Bracket {
                    lo,
                    hi: (lo + 1) % n,
                    w: (s - lo as f64).clamp(0.0, 1.0),
                    lo_reflected: false,
                }
            }
            AxisKind::Radial { .. } => {
                let first = ax.node(0);
                let r = x.max(0.0);
                if r < first {
                    // Between the mirrored node at -first and the node at +first.
                    Bracket {
                        lo: 0,
                        hi: 0,
                        w: (r + first) / (2.0 * first),
                        lo_reflected: true,
                    }
                } else {
                    let s = ((r - first) / h).min((n - 1) as f64);
                    let lo = (s.floor() as usize).min(n - 2);
                    Bracket {
                        lo,
                        hi: lo + 1,
                        w: s - lo as f64,
                        lo_reflected: false,
                    }
                }
            }
        }
    }

    /// Multilinear interpolation; clamped axes saturate at their ends.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let dims = self.dims();
        debug_assert_eq!(x.len(), dims);
        let brackets: Vec<Bracket> = self
            .axes
            .iter()
            .zip(x)
            .map(|(ax, &v)| Self::bracket(ax, v))
            .collect();
        let strides = self.strides();
        let mut total = 0.0;
        for corner in 0..(1usize << dims) {
            let mut weight = 1.0;
            let mut idx = [0usize; 8];
            let mut shift_axes: [Option<usize>; 8] = [None; 8];
            for d in 0..dims {
                let b = brackets[d];
                let upper = corner >> d & 1 == 1;
                weight *= if upper { b.w } else { 1.0 - b.w };
                idx[d] = if upper { b.hi } else { b.lo };
                if !upper && b.lo_reflected {
                    if let AxisKind::Radial { angle_axis } = self.axes[d].kind {
                        shift_axes[d] = Some(angle_axis);
                    }
                }
            }
            if weight == 0.0 {
                continue;
            }
            for d in 0..dims {
                if let Some(a) = shift_axes[d] {
                    let n = self.axes[a].count;
                    idx[a] = (idx[a] + n / 2) % n;
                }
            }
            let flat: usize = (0..dims).map(|d| idx[d] * strides[d]).sum();
            total += weight * self.values[flat];
        }
        total
    }

    /// Central-difference gradient of the interpolant with a one-cell step,
    /// falling back to one-sided differences at clamped ends.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dims()];
        let mut probe = x.to_vec();
        for (d, ax) in self.axes.iter().enumerate() {
            let h = ax.spacing();
            let (lo_lim, hi_lim) = match ax.kind {
                AxisKind::Clamped => (ax.node(0), ax.node(ax.count - 1)),
                AxisKind::Periodic => (f64::NEG_INFINITY, f64::INFINITY),
                // Negative radii are handled by the interpolant's reflection.
                AxisKind::Radial { .. } => (f64::NEG_INFINITY, ax.node(ax.count - 1)),
            };
            let xp = (x[d] + h).min(hi_lim);
            let xm = (x[d] - h).max(lo_lim);
            if xp <= xm {
                continue;
            }
            probe[d] = xp;
            let vp = self.eval_signed(&probe, d);
            probe[d] = xm;
            let vm = self.eval_signed(&probe, d);
            probe[d] = x[d];
            g[d] = (vp - vm) / (xp - xm);
        }
        g
    }

    /// Evaluation that maps a negative radius on axis `d` onto the opposite
    /// side of the origin.
    fn eval_signed(&self, x: &[f64], d: usize) -> f64 {
        if let AxisKind::Radial { angle_axis } = self.axes[d].kind {
            if x[d] < 0.0 {
                let mut y = x.to_vec();
                y[d] = -x[d];
                y[angle_axis] += std::f64::consts::PI;
                return self.eval(&y);
            }
        }
        self.eval(x)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.axes.len() * 32 + self.values.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.axes.len() as u64).to_le_bytes());
        for ax in &self.axes {
            let (code, extra) = ax.kind.code();
            out.extend_from_slice(&ax.min.to_le_bytes());
            out.extend_from_slice(&ax.max.to_le_bytes());
            out.extend_from_slice(&(ax.count as u64).to_le_bytes());
            out.extend_from_slice(&(code as u64 | (extra as u64) << 32).to_le_bytes());
        }
        out.extend_from_slice(&self.converged_residual.to_le_bytes());
        out.extend_from_slice(&self.params_key.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Artifact("bad magic".into()));
        }
        let dims = cur.u64()? as usize;
        if dims == 0 || dims > 8 {
            return Err(Error::Artifact(format!("unsupported dimension count {dims}")));
        }
        let mut axes = Vec::with_capacity(dims);
        for _ in 0..dims {
            let min = cur.f64()?;
            let max = cur.f64()?;
            let count = cur.u64()? as usize;
            let kind_word = cur.u64()?;
            let kind = AxisKind::from_code(kind_word as u32, (kind_word >> 32) as u32)?;
            let ax = Axis { min, max, count, kind };
            ax.validate(dims, 2).map_err(|e| Error::Artifact(e.to_string()))?;
            axes.push(ax);
        }
        let converged_residual = cur.f64()?;
        let params_key = cur.u64()?;
        let n: usize = axes.iter().map(|a| a.count).product();
        if bytes.len() - cur.pos != n * 8 {
            return Err(Error::Artifact(format!(
                "payload holds {} bytes, expected {}",
                bytes.len() - cur.pos,
                n * 8
            )));
        }
        let values = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            axes,
            values,
            converged_residual,
            params_key,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn strides(axes: &[Axis]) -> Vec<usize> {
    let mut s = vec![1; axes.len()];
    for d in (0..axes.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * axes[d + 1].count;
    }
    s
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Artifact("truncated header".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
