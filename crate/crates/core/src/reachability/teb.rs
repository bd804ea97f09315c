//! Tracking error bounds read off solved value grids.

use serde::{Deserialize, Serialize};

use super::grid::{AxisKind, ValueGrid};
use crate::error::{Error, Result};

/// Planar disc radius and vertical half-height that bound the tracker's
/// deviation from the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingBound {
    /// Planar bound [m].
    pub radius: f64,
    /// Vertical half-height [m].
    pub z_extent: f64,
    /// Planar sublevel value.
    pub level: f64,
    /// Vertical sublevel value.
    pub z_level: f64,
    /// Largest value jump between adjacent planar nodes touching the set.
    pub cell_variation: f64,
    /// Same for the vertical grid.
    pub z_cell_variation: f64,
}

impl TrackingBound {
    /// Planar tolerance used by closed-loop checks.
    pub fn planar_tolerance(&self) -> f64 {
        self.radius + self.cell_variation
    }

    pub fn vertical_tolerance(&self) -> f64 {
        self.z_extent + self.z_cell_variation
    }
}

/// Minimum of a 4D planar grid over its two velocity axes, indexed by
/// `(d, psi)` node, row-major.
pub fn velocity_min_projection(grid: &ValueGrid) -> Vec<f64> {
    assert_eq!(grid.dims(), 4, "planar grid expected");
    let inner = grid.axes[2].count * grid.axes[3].count;
    grid.values
        .chunks(inner)
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .collect()
}

/// Planar bound for a sublevel value: the outer cell edge of the farthest
/// `d` node whose velocity-minimized value is at most `level`.
pub fn extract_teb(grid: &ValueGrid, level: f64) -> Result<f64> {
    let proj = velocity_min_projection(grid);
    let d_axis = &grid.axes[0];
    let n_psi = grid.axes[1].count;
    let mut far: Option<usize> = None;
    for (i, &v) in proj.iter().enumerate() {
        if v <= level {
            let k = i / n_psi;
            far = Some(far.map_or(k, |f| f.max(k)));
        }
    }
    let k = far.ok_or(Error::EmptySublevel(level))?;
    let edge = match d_axis.kind {
        AxisKind::Radial { .. } if k + 1 == d_axis.count => d_axis.max,
        AxisKind::Radial { .. } => d_axis.node(k) + 0.5 * d_axis.spacing(),
        _ => d_axis.node(k),
    };
    Ok(edge)
}

/// Largest `|z|` over vertical grid nodes with value at most `level`.
pub fn vertical_extent(grid: &ValueGrid, level: f64) -> Result<f64> {
    assert_eq!(grid.dims(), 2, "vertical grid expected");
    let n_v = grid.axes[1].count;
    grid.values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= level)
        .map(|(i, _)| grid.axes[0].node(i / n_v).abs())
        .fold(None, |acc: Option<f64>, z| Some(acc.map_or(z, |a| a.max(z))))
        .ok_or(Error::EmptySublevel(level))
}

/// Largest value difference between axis-adjacent nodes at least one of
/// which lies in the sublevel set.
pub fn cell_variation(grid: &ValueGrid, level: f64) -> f64 {
    let strides = grid.strides();
    let mut worst: f64 = 0.0;
    for (flat, &v) in grid.values.iter().enumerate() {
        let idx = grid.unflatten(flat);
        for (d, ax) in grid.axes.iter().enumerate() {
            let k = idx[d];
            let next = match ax.kind {
                AxisKind::Periodic => {
                    if k + 1 == ax.count {
                        flat - k * strides[d]
                    } else {
                        flat + strides[d]
                    }
                }
                _ => {
                    if k + 1 == ax.count {
                        continue;
                    }
                    flat + strides[d]
                }
            };
            let w = grid.values[next];
            if v <= level || w <= level {
                worst = worst.max((v - w).abs());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reachability::grid::Axis;

    fn toy_planar() -> ValueGrid {
        let axes = vec![
            Axis::radial(1.0, 5, 1),
            Axis::periodic(-std::f64::consts::PI, std::f64::consts::PI, 4),
            Axis::clamped(-1.0, 1.0, 3),
            Axis::clamped(-1.0, 1.0, 3),
        ];
        let mut values = Vec::new();
        for kd in 0..5 {
            for _ in 0..4 {
                for kt in 0..3 {
                    for kn in 0..3 {
                        let d = axes[0].node(kd);
                        values.push(d + 0.1 * ((kt as f64 - 1.0).abs() + (kn as f64 - 1.0).abs()));
                    }
                }
            }
        }
        ValueGrid {
            axes,
            values,
            converged_residual: 0.0,
            params_key: 0,
        }
    }

    #[test]
    fn infinite_level_covers_grid() {
        let g = toy_planar();
        assert_eq!(extract_teb(&g, f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn tight_level_gives_first_cell() {
        let g = toy_planar();
        let r = extract_teb(&g, 0.1 + 1e-9).unwrap();
        assert!((r - 0.2).abs() < 1e-12);
        assert!(matches!(extract_teb(&g, 0.05), Err(Error::EmptySublevel(_))));
    }

    #[test]
    fn radius_grows_with_level() {
        let g = toy_planar();
        let mut last = 0.0;
        for k in 1..20 {
            let r = extract_teb(&g, 0.05 * k as f64 + 0.1).unwrap();
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn variation_on_toy_grid() {
        let g = toy_planar();
        let kappa = cell_variation(&g, 0.15);
        assert!((kappa - 0.2).abs() < 1e-12, "{kappa}");
    }
}
