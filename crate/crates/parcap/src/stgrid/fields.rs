use std::sync::Arc;

use crate::error::{Error, Result};
use crate::stgrid::SpaceTimeGrid;

/// Real-valued function sampled on every (node, time level) of a grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<SpaceTimeGrid>,
    /// Level-major storage: data[level * num_nodes + node].
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<SpaceTimeGrid>) -> Self {
        let len = grid.num_levels() * grid.num_nodes();
        ScalarField {
            grid,
            data: vec![0.0; len],
        }
    }

    pub fn from_fn(grid: Arc<SpaceTimeGrid>, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let nn = grid.num_nodes();
        let mut data = Vec::with_capacity(grid.num_levels() * nn);
        for k in 0..grid.num_levels() {
            let t = grid.time(k);
            for node in 0..nn {
                let x = grid.node_coords(node);
                data.push(f(&x, t));
            }
        }
        ScalarField { grid, data }
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let nn = self.grid.num_nodes();
        &self.data[k * nn..(k + 1) * nn]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        let nn = self.grid.num_nodes();
        &mut self.data[k * nn..(k + 1) * nn]
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.grid.num_levels() * self.grid.num_nodes() {
            return Err(Error::Contract("field shape does not match grid".into()));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("field contains non-finite values".into()));
        }
        Ok(())
    }

    /// True when every lateral-boundary node carries the value 0 at all levels.
    pub fn has_zero_lateral_trace(&self, tol: f64) -> bool {
        let nn = self.grid.num_nodes();
        for k in 0..self.grid.num_levels() {
            let lvl = self.level(k);
            for node in 0..nn {
                if self.grid.is_lateral_boundary(node) && lvl[node].abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn scale(&mut self, lambda: f64) {
        for v in &mut self.data {
            *v *= lambda;
        }
    }
}

/// Function of space only, one value per spatial node.
#[derive(Debug, Clone)]
pub struct SpatialField {
    pub grid: Arc<SpaceTimeGrid>,
    pub data: Vec<f64>,
}

impl SpatialField {
    pub fn zeros(grid: Arc<SpaceTimeGrid>) -> Self {
        let len = grid.num_nodes();
        SpatialField {
            grid,
            data: vec![0.0; len],
        }
    }

    pub fn from_fn(grid: Arc<SpaceTimeGrid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let data = (0..grid.num_nodes())
            .map(|node| f(&grid.node_coords(node)))
            .collect();
        SpatialField { grid, data }
    }

    /// Zero out values on the lateral boundary.
    pub fn enforce_zero_trace(&mut self) {
        for node in 0..self.grid.num_nodes() {
            if self.grid.is_lateral_boundary(node) {
                self.data[node] = 0.0;
            }
        }
    }
}

/// Per-cell vector samples (the codomain of the discrete gradient): one
/// value per spatial cell per axis, for a single time level.
#[derive(Debug, Clone)]
pub struct CellVectors {
    /// comps[axis][cell]
    pub comps: Vec<Vec<f64>>,
}

impl CellVectors {
    pub fn zeros(dim: usize, num_cells: usize) -> Self {
        CellVectors {
            comps: vec![vec![0.0; num_cells]; dim],
        }
    }

    pub fn magnitude_sq(&self, cell: usize) -> f64 {
        self.comps.iter().map(|c| c[cell] * c[cell]).sum()
    }
}

/// Space-time flux: one vector sample per spatial cell per time level,
/// stored per axis. Shares the staggering of the discrete gradient so that
/// `div` (the negative adjoint of `grad`) applies directly.
#[derive(Debug, Clone)]
pub struct FluxField {
    pub grid: Arc<SpaceTimeGrid>,
    /// comps[axis][level * num_cells + cell]
    pub comps: Vec<Vec<f64>>,
}

impl FluxField {
    pub fn zeros(grid: Arc<SpaceTimeGrid>) -> Self {
        let dim = grid.dim();
        let len = grid.num_levels() * grid.num_cells();
        FluxField {
            grid,
            comps: vec![vec![0.0; len]; dim],
        }
    }

    pub fn level(&self, k: usize) -> CellVectors {
        let nc = self.grid.num_cells();
        CellVectors {
            comps: self
                .comps
                .iter()
                .map(|c| c[k * nc..(k + 1) * nc].to_vec())
                .collect(),
        }
    }

    pub fn set_level(&mut self, k: usize, cv: &CellVectors) {
        let nc = self.grid.num_cells();
        for (axis, c) in cv.comps.iter().enumerate() {
            self.comps[axis][k * nc..(k + 1) * nc].copy_from_slice(c);
        }
    }

    /// Integral of |F|^q over Omega_T (right-endpoint rule in time).
    pub fn lq_norm_pow(&self, q: f64) -> f64 {
        let nc = self.grid.num_cells();
        let w = self.grid.cell_volume() * self.grid.dt;
        let mut total = 0.0;
        for k in 1..self.grid.num_levels() {
            for cell in 0..nc {
                let m2: f64 = self
                    .comps
                    .iter()
                    .map(|c| c[k * nc + cell] * c[k * nc + cell])
                    .sum();
                total += m2.powf(q / 2.0) * w;
            }
        }
        total
    }
}
