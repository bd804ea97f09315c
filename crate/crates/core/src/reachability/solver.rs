//! Monotone upwind value iteration for infinite-horizon "maximum cost over
//! time" games.
//!
//! The iteration is
//!
//! ```text
//! V <- min(cap, max(l, V + dt * H(x, p^-, p^+)))
//! ```
//!
//! starting from `V = l`, where `p^-` and `p^+` are the one-sided difference
//! quotients and `H` is an upwind numerical Hamiltonian: for each control pair
//! the dynamics `f` are paired with `p^+` where `f_i > 0` and with `p^-` where
//! `f_i < 0`, then optimized over the controls (adversary outside, tracker
//! inside). The update is monotone under the CFL condition
//! `dt * sum_i |f_i| / h_i <= 1`, so from `V = l` the iterates increase
//! towards the fixed point. Updates are Jacobi style into a second buffer and
//! every node uses its own CFL step.
//!
//! Ghost values beyond a clamped end copy the end node (no outward slope).
//! Beyond the top of a radial axis the ghost sits at the value cap, since
//! leaving the grid radially means the cost has passed the cap.

use rayon::prelude::*;

use super::grid::{strides, Axis, AxisKind, ValueGrid};
use crate::error::{Error, Result};

pub trait Game<const D: usize>: Sync {
    /// Running cost whose maximum over time the game value records.
    fn stage_cost(&self, x: &[f64; D]) -> f64;

    /// Upwind Hamiltonian, non-decreasing in every `p_plus[i]` and
    /// non-increasing in every `p_minus[i]`.
    fn upwind_hamiltonian(&self, x: &[f64; D], p_minus: &[f64; D], p_plus: &[f64; D]) -> f64;

    /// Bounds on `|f_i|` at `x` over all controls.
    fn max_speeds(&self, x: &[f64; D]) -> [f64; D];

    /// Values are clamped to this ceiling; reaching it means the state can be
    /// driven off the grid.
    fn value_cap(&self) -> f64;
}

/// `f p^+` for outgoing flow in the positive direction, `f p^-` otherwise.
#[inline]
pub fn upwind(f: f64, p_minus: f64, p_plus: f64) -> f64 {
    if f > 0.0 {
        f * p_plus
    } else {
        f * p_minus
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub residual_tol: f64,
    pub max_sweeps: usize,
    /// Fraction of the local CFL limit used as time step.
    pub cfl: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-5,
            max_sweeps: 20_000,
            cfl: 0.9,
        }
    }
}

/// Result of a solve, including how many sweeps it took.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub grid: ValueGrid,
    pub sweeps: usize,
}

struct NodeData<const D: usize> {
    stage: Vec<f64>,
    dt: Vec<f64>,
    speed: Vec<[f64; D]>,
}

pub fn solve_game<const D: usize, G: Game<D>>(
    axes: [Axis; D],
    game: &G,
    opts: &SolverOptions,
    params_key: u64,
) -> Result<SolveReport> {
    for ax in &axes {
        ax.validate(D, 5)?;
        if let AxisKind::Radial { angle_axis } = ax.kind {
            let ang = axes[angle_axis];
            if ang.kind != AxisKind::Periodic || ang.count % 2 != 0 {
                return Err(Error::InvalidInput(
                    "radial axis needs a periodic angle axis with an even node count".into(),
                ));
            }
        }
    }
    if !(opts.cfl > 0.0 && opts.cfl <= 1.0) {
        return Err(Error::InvalidInput(format!("cfl must be in (0, 1], got {}", opts.cfl)));
    }

    let counts: [usize; D] = std::array::from_fn(|d| axes[d].count);
    let spacing: [f64; D] = std::array::from_fn(|d| axes[d].spacing());
    let coords: Vec<Vec<f64>> = axes.iter().map(|a| (0..a.count).map(|k| a.node(k)).collect()).collect();
    let stride_vec = strides(&axes);
    let stride: [usize; D] = std::array::from_fn(|d| stride_vec[d]);
    let n: usize = counts.iter().product();
    let row_len = counts[D - 1];
    let cap = game.value_cap();

    let point = |flat: usize| -> ([usize; D], [f64; D]) {
        let mut idx = [0usize; D];
        let mut rem = flat;
        for d in (0..D).rev() {
            idx[d] = rem % counts[d];
            rem /= counts[d];
        }
        let x = std::array::from_fn(|d| coords[d][idx[d]]);
        (idx, x)
    };

    let mut data = NodeData::<D> {
        stage: vec![0.0; n],
        dt: vec![0.0; n],
        speed: vec![[0.0; D]; n],
    };
    data.stage
        .par_iter_mut()
        .zip(data.dt.par_iter_mut())
        .zip(data.speed.par_iter_mut())
        .enumerate()
        .for_each(|(flat, ((l, dt), a))| {
            let (_, x) = point(flat);
            *l = game.stage_cost(&x).min(cap);
            *a = game.max_speeds(&x);
            let rate: f64 = (0..D).map(|d| a[d] / spacing[d]).sum();
            *dt = if rate > 0.0 { opts.cfl / rate } else { 0.0 };
        });

    let mut values = data.stage.clone();
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;

    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let current = &values;
        residual = next
            .par_chunks_mut(row_len)
            .enumerate()
            .map(|(row, out)| {
                let base = row * row_len;
                let (mut idx, mut x) = point(base);
                let mut local_res: f64 = 0.0;
                for k in 0..row_len {
                    let flat = base + k;
                    idx[D - 1] = k;
                    x[D - 1] = coords[D - 1][k];
                    let v = current[flat];
                    let mut pm = [0.0; D];
                    let mut pp = [0.0; D];
                    for d in 0..D {
                        let (vm, vp) = neighbours(current, &axes, &counts, &stride, &idx, flat, d, v, cap);
                        pm[d] = (v - vm) / spacing[d];
                        pp[d] = (vp - v) / spacing[d];
                    }
                    let h = game.upwind_hamiltonian(&x, &pm, &pp);
                    let updated = (v + data.dt[flat] * h).max(data.stage[flat]).min(cap);
                    local_res = local_res.max((updated - v).abs());
                    out[k] = updated;
                }
                local_res
            })
            .reduce(|| 0.0, f64::max);
        std::mem::swap(&mut values, &mut next);
        if residual < opts.residual_tol {
            break;
        }
    }

    if !(residual < opts.residual_tol) {
        return Err(Error::NotConverged {
            sweeps,
            residual,
            tolerance: opts.residual_tol,
        });
    }

    Ok(SolveReport {
        grid: ValueGrid {
            axes: axes.to_vec(),
            values,
            converged_residual: residual,
            params_key,
        },
        sweeps,
    })
}

/// Values of the lower and upper neighbours along axis `d`: wrap-around on
/// periodic axes, reflection through the polar origin and the cap beyond the
/// top on radial axes, and a copy of the end node beyond clamped ends.
#[allow(clippy::too_many_arguments)]
#[inline]
fn neighbours<const D: usize>(
    v: &[f64],
    axes: &[Axis; D],
    counts: &[usize; D],
    stride: &[usize; D],
    idx: &[usize; D],
    flat: usize,
    d: usize,
    here: f64,
    cap: f64,
) -> (f64, f64) {
    let k = idx[d];
    let n = counts[d];
    let s = stride[d];
    match axes[d].kind {
        AxisKind::Periodic => {
            let lo = if k == 0 { flat + (n - 1) * s } else { flat - s };
            let hi = if k == n - 1 { flat - (n - 1) * s } else { flat + s };
            (v[lo], v[hi])
        }
        AxisKind::Clamped => {
            let lo = if k == 0 { here } else { v[flat - s] };
            let hi = if k == n - 1 { here } else { v[flat + s] };
            (lo, hi)
        }
        AxisKind::Radial { angle_axis } => {
            let hi = if k == n - 1 { cap } else { v[flat + s] };
            let lo = if k == 0 {
                let na = counts[angle_axis];
                let ka = idx[angle_axis];
                let shifted = (ka + na / 2) % na;
                v[flat + shifted * stride[angle_axis] - ka * stride[angle_axis]]
            } else {
                v[flat - s]
            };
            (lo, hi)
        }
    }
}
