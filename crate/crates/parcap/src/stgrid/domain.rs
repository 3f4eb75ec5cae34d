use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Spatial base of the cylinder. Boxes must have equal extents per axis so
/// that a single spacing h covers the tensor grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainShape {
    /// n = 1: the interval (lo, hi).
    Interval { lo: f64, hi: f64 },
    /// n = 2: the open square (x0, x1) x (y0, y1).
    Rect { x: (f64, f64), y: (f64, f64) },
    /// n = 2: the open disk of given center and radius.
    Disk { center: [f64; 2], radius: f64 },
}

/// The space-time cylinder Omega x (0, T) together with the exponent p of
/// the evolution equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub shape: DomainShape,
    pub total_time: f64,
    pub exponent: f64,
}

impl Domain {
    pub fn interval(lo: f64, hi: f64, total_time: f64, exponent: f64) -> Result<Self> {
        Self::new(DomainShape::Interval { lo, hi }, total_time, exponent)
    }

    pub fn square(lo: f64, hi: f64, total_time: f64, exponent: f64) -> Result<Self> {
        Self::new(
            DomainShape::Rect {
                x: (lo, hi),
                y: (lo, hi),
            },
            total_time,
            exponent,
        )
    }

    pub fn disk(center: [f64; 2], radius: f64, total_time: f64, exponent: f64) -> Result<Self> {
        Self::new(DomainShape::Disk { center, radius }, total_time, exponent)
    }

    pub fn new(shape: DomainShape, total_time: f64, exponent: f64) -> Result<Self> {
        let d = Domain {
            shape,
            total_time,
            exponent,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        if !(self.total_time.is_finite() && self.total_time > 0.0) {
            return Err(Error::Config(format!(
                "final time must be finite and positive, got {}",
                self.total_time
            )));
        }
        if !(self.exponent > 1.0 && self.exponent.is_finite()) {
            return Err(Error::Config(format!(
                "exponent p must lie in (1, inf), got {}",
                self.exponent
            )));
        }
        match &self.shape {
            DomainShape::Interval { lo, hi } => {
                if !(hi > lo) {
                    return Err(Error::Config(format!(
                        "degenerate interval ({lo}, {hi})"
                    )));
                }
            }
            DomainShape::Rect { x, y } => {
                if !(x.1 > x.0 && y.1 > y.0) {
                    return Err(Error::Config(format!("degenerate box {x:?} x {y:?}")));
                }
                let (ex, ey) = (x.1 - x.0, y.1 - y.0);
                if (ex - ey).abs() > 1e-12 * ex.max(ey) {
                    return Err(Error::Config(
                        "box extents must be equal per axis for a uniform spacing".into(),
                    ));
                }
            }
            DomainShape::Disk { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config(format!("degenerate disk radius {radius}")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self.shape {
            DomainShape::Interval { .. } => 1,
            DomainShape::Rect { .. } | DomainShape::Disk { .. } => 2,
        }
    }

    /// Bounding interval of the domain along the given axis.
    pub fn bounds(&self, axis: usize) -> (f64, f64) {
        match &self.shape {
            DomainShape::Interval { lo, hi } => (*lo, *hi),
            DomainShape::Rect { x, y } => {
                if axis == 0 {
                    *x
                } else {
                    *y
                }
            }
            DomainShape::Disk { center, radius } => (center[axis] - radius, center[axis] + radius),
        }
    }

    /// Strict interior test for a spatial point.
    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.shape {
            DomainShape::Interval { lo, hi } => x[0] > *lo && x[0] < *hi,
            DomainShape::Rect { x: bx, y: by } => {
                x[0] > bx.0 && x[0] < bx.1 && x[1] > by.0 && x[1] < by.1
            }
            DomainShape::Disk { center, radius } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                (dx * dx + dy * dy).sqrt() < *radius
            }
        }
    }

    /// Euclidean distance to the lateral boundary from an interior point.
    pub fn dist_to_boundary(&self, x: &[f64]) -> f64 {
        match &self.shape {
            DomainShape::Interval { lo, hi } => (x[0] - lo).min(hi - x[0]),
            DomainShape::Rect { x: bx, y: by } => (x[0] - bx.0)
                .min(bx.1 - x[0])
                .min(x[1] - by.0)
                .min(by.1 - x[1]),
            DomainShape::Disk { center, radius } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                radius - (dx * dx + dy * dy).sqrt()
            }
        }
    }
}

/// Uniform space-time grid on the closure of Omega x (0, T).
///
/// Spatial nodes cover the bounding box of Omega with `nodes_per_axis`
/// nodes per axis; for disk domains, nodes outside the disk are inactive
/// and carry the zero lateral trace.
#[derive(Debug, Clone)]
pub struct SpaceTimeGrid {
    pub domain: Domain,
    pub nodes_per_axis: usize,
    pub time_steps: usize,
    pub h: f64,
    pub dt: f64,
    axes: Vec<Vec<f64>>,
    active: Vec<bool>,
}

impl SpaceTimeGrid {
    pub fn build(domain: Domain, nodes_per_axis: usize, time_steps: usize) -> Result<Arc<Self>> {
        if nodes_per_axis < 8 {
            return Err(Error::Config(format!(
                "need at least 8 nodes per axis, got {nodes_per_axis}"
            )));
        }
        if time_steps < 4 {
            return Err(Error::Config(format!(
                "need at least 4 time steps, got {time_steps}"
            )));
        }
        let dim = domain.dim();
        let (lo0, hi0) = domain.bounds(0);
        let h = (hi0 - lo0) / (nodes_per_axis - 1) as f64;
        let dt = domain.total_time / time_steps as f64;
        let mut axes = Vec::with_capacity(dim);
        for axis in 0..dim {
            let (lo, _) = domain.bounds(axis);
            axes.push(
                (0..nodes_per_axis)
                    .map(|i| lo + i as f64 * h)
                    .collect::<Vec<_>>(),
            );
        }
        let mut grid = SpaceTimeGrid {
            domain,
            nodes_per_axis,
            time_steps,
            h,
            dt,
            axes,
            active: Vec::new(),
        };
        let nn = grid.num_nodes();
        let mut active = vec![false; nn];
        for node in 0..nn {
            let x = grid.node_coords(node);
            active[node] = grid.domain.contains(&x);
        }
        grid.active = active;
        Ok(Arc::new(grid))
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_axis.pow(self.dim() as u32)
    }

    pub fn num_cells(&self) -> usize {
        (self.nodes_per_axis - 1).pow(self.dim() as u32)
    }

    /// Number of time levels, i.e. time_steps + 1 (levels 0..=M).
    pub fn num_levels(&self) -> usize {
        self.time_steps + 1
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.dt
    }

    /// Cell volume h^n.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn node_index(&self, ij: &[usize]) -> usize {
        match self.dim() {
            1 => ij[0],
            _ => ij[1] * self.nodes_per_axis + ij[0],
        }
    }

    pub fn node_multi_index(&self, node: usize) -> [usize; 2] {
        match self.dim() {
            1 => [node, 0],
            _ => [node % self.nodes_per_axis, node / self.nodes_per_axis],
        }
    }

    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        let mi = self.node_multi_index(node);
        (0..self.dim()).map(|a| self.axes[a][mi[a]]).collect()
    }

    /// Nodes strictly inside Omega; complements the lateral boundary mask.
    pub fn is_active(&self, node: usize) -> bool {
        self.active[node]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    /// Lateral boundary: nodes on or outside the boundary of Omega.
    pub fn is_lateral_boundary(&self, node: usize) -> bool {
        !self.active[node]
    }

    /// Nearest time level to t, clamped to [0, M].
    pub fn nearest_level(&self, t: f64) -> usize {
        let k = (t / self.dt).round();
        (k.max(0.0) as usize).min(self.time_steps)
    }

    pub fn axis_coords(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_1d() {
        let dom = Domain::interval(-1.0, 1.0, 1.0, 2.0).unwrap();
        let g = SpaceTimeGrid::build(dom, 9, 4).unwrap();
        assert!((g.h - 0.25).abs() < 1e-15);
        assert!((g.dt - 0.25).abs() < 1e-15);
        assert_eq!(g.num_nodes(), 9);
        assert_eq!(g.num_levels(), 5);
        assert!(g.is_lateral_boundary(0));
        assert!(g.is_lateral_boundary(8));
        assert!(g.is_active(4));
    }

    #[test]
    fn uniform_grid_2d() {
        let dom = Domain::square(-2.0, 2.0, 0.5, 2.0).unwrap();
        let g = SpaceTimeGrid::build(dom, 17, 8).unwrap();
        assert!((g.h - 0.25).abs() < 1e-15);
        assert!((g.dt - 0.0625).abs() < 1e-15);
        assert_eq!(g.num_nodes(), 17 * 17);
    }

    #[test]
    fn degenerate_domain_rejected() {
        assert!(Domain::interval(0.0, 0.0, 1.0, 2.0).is_err());
        assert!(Domain::interval(-1.0, 1.0, 0.0, 2.0).is_err());
        assert!(Domain::interval(-1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn disk_active_mask() {
        let dom = Domain::disk([0.0, 0.0], 1.0, 1.0, 2.0).unwrap();
        let g = SpaceTimeGrid::build(dom, 17, 4).unwrap();
        // center is active, bounding-box corner is not
        let center = g.node_index(&[8, 8]);
        let corner = g.node_index(&[0, 0]);
        assert!(g.is_active(center));
        assert!(!g.is_active(corner));
    }
}
