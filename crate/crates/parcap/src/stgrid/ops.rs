//! Discrete differential operators and space-time norms.
//!
//! `grad_slice` maps nodal values to per-cell vectors; `div_slice` is its
//! negative adjoint with respect to the h^n-weighted inner products, so
//! summation by parts holds exactly for fields with zero lateral trace.

use crate::error::{Error, Result};
use crate::stgrid::{CellVectors, ScalarField, SpaceTimeGrid};

/// Spatial gradient of a single time slice, one vector per cell.
///
/// 1D: forward difference per cell. 2D: edge-pair average per cell, which
/// keeps both components on the same stencil and makes the adjoint exact.
pub fn grad_slice(grid: &SpaceTimeGrid, v: &[f64]) -> CellVectors {
    let n = grid.nodes_per_axis;
    let h = grid.h;
    match grid.dim() {
        1 => {
            let mut gx = vec![0.0; n - 1];
            for c in 0..n - 1 {
                gx[c] = (v[c + 1] - v[c]) / h;
            }
            CellVectors { comps: vec![gx] }
        }
        _ => {
            let nc = n - 1;
            let mut gx = vec![0.0; nc * nc];
            let mut gy = vec![0.0; nc * nc];
            for cj in 0..nc {
                for ci in 0..nc {
                    let sw = cj * n + ci;
                    let se = sw + 1;
                    let nw = sw + n;
                    let ne = nw + 1;
                    gx[cj * nc + ci] = (v[se] - v[sw] + v[ne] - v[nw]) / (2.0 * h);
                    gy[cj * nc + ci] = (v[nw] - v[sw] + v[ne] - v[se]) / (2.0 * h);
                }
            }
            CellVectors {
                comps: vec![gx, gy],
            }
        }
    }
}

/// Negative adjoint of `grad_slice`: scatters cell vectors back to nodes so
/// that <v, div F> = -<grad v, F> for zero-trace v.
pub fn div_slice(grid: &SpaceTimeGrid, f: &CellVectors) -> Vec<f64> {
    let n = grid.nodes_per_axis;
    let h = grid.h;
    let mut out = vec![0.0; grid.num_nodes()];
    match grid.dim() {
        1 => {
            let fx = &f.comps[0];
            for c in 0..n - 1 {
                out[c] += fx[c] / h;
                out[c + 1] -= fx[c] / h;
            }
        }
        _ => {
            let nc = n - 1;
            let fx = &f.comps[0];
            let fy = &f.comps[1];
            for cj in 0..nc {
                for ci in 0..nc {
                    let cell = cj * nc + ci;
                    let sw = cj * n + ci;
                    let se = sw + 1;
                    let nw = sw + n;
                    let ne = nw + 1;
                    let ax = fx[cell] / (2.0 * h);
                    let ay = fy[cell] / (2.0 * h);
                    // transpose of the grad stencil, negated
                    out[se] -= ax;
                    out[ne] -= ax;
                    out[sw] += ax;
                    out[nw] += ax;
                    out[nw] -= ay;
                    out[ne] -= ay;
                    out[sw] += ay;
                    out[se] += ay;
                }
            }
        }
    }
    out
}

/// h^n-weighted inner product over nodes.
pub fn dot_nodes(grid: &SpaceTimeGrid, a: &[f64], b: &[f64]) -> f64 {
    let w = grid.cell_volume();
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * w
}

/// h^n-weighted inner product over cells of two cell-vector sets.
pub fn dot_cells(grid: &SpaceTimeGrid, a: &CellVectors, b: &CellVectors) -> f64 {
    let w = grid.cell_volume();
    let mut s = 0.0;
    for (ca, cb) in a.comps.iter().zip(&b.comps) {
        s += ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>();
    }
    s * w
}

/// Integral of |grad v|^q over one slice.
pub fn lp_norm_grad_slice(grid: &SpaceTimeGrid, v: &[f64], q: f64) -> f64 {
    let g = grad_slice(grid, v);
    let w = grid.cell_volume();
    let mut s = 0.0;
    for cell in 0..grid.num_cells() {
        s += g.magnitude_sq(cell).powf(q / 2.0);
    }
    s * w
}

/// Space-time integral of |grad v|^q by the Riemann sum over time steps
/// (value taken at the right endpoint of each step, matching the implicit
/// Euler energy accounting).
pub fn lp_norm_grad(v: &ScalarField, q: f64) -> Result<f64> {
    if q <= 1.0 {
        return Err(Error::Config(format!("gradient norm exponent q = {q} <= 1")));
    }
    let grid = &v.grid;
    let mut total = 0.0;
    for k in 1..grid.num_levels() {
        total += lp_norm_grad_slice(grid, v.level(k), q) * grid.dt;
    }
    Ok(total)
}

/// Max over time levels of the L2 energy of a slice.
pub fn sup_t_l2(v: &ScalarField) -> f64 {
    let grid = &v.grid;
    let w = grid.cell_volume();
    let mut best = 0.0f64;
    for k in 0..grid.num_levels() {
        let e: f64 = v.level(k).iter().map(|x| x * x).sum::<f64>() * w;
        best = best.max(e);
    }
    best
}
