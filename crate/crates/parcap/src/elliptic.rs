//! Spatial (time-frozen) p-Laplace solves, elliptic p-capacity, the
//! p-fatness ratio, and the dual norm of the time derivative evaluated
//! slice by slice.

use serde::Serialize;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::solver::{newton_minimize_continued, NewtonOpts, SliceProblem, SolveStats};
use crate::stgrid::{
    grad_slice, lp_norm_grad_slice, FluxField, ScalarField, SetMask, SpaceTimeGrid, SpatialField,
};

pub const EPS_FINAL: f64 = 1e-8;

/// Minimize (1/p) int |grad w|^p - int g w over zero-trace fields.
pub fn solve_p_poisson(
    g: &SpatialField,
    p: f64,
    tol: f64,
) -> Result<(SpatialField, SolveStats)> {
    let grid = g.grid.clone();
    if g.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("right-hand side not finite".into()));
    }
    let mut w = SpatialField::zeros(grid.clone());
    if g.data.iter().all(|&v| v == 0.0) {
        return Ok((w, SolveStats::default()));
    }
    let fixed = zero_trace_fixed(&grid);
    let prob = SliceProblem {
        grid: &grid,
        p,
        eps: EPS_FINAL,
        alpha: 0.0,
        anchor: None,
        rhs: Some(&g.data),
        fixed: &fixed,
    };
    let opts = NewtonOpts {
        tol,
        ..NewtonOpts::default()
    };
    let stats = newton_minimize_continued(&prob, &mut w.data, EPS_FINAL, &opts)?;
    Ok((w, stats))
}

fn zero_trace_fixed(grid: &SpaceTimeGrid) -> Vec<Option<f64>> {
    (0..grid.num_nodes())
        .map(|i| {
            if grid.is_lateral_boundary(i) {
                Some(0.0)
            } else {
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticCapacityReport {
    pub value: f64,
    pub kkt_residual: f64,
    pub min_multiplier: f64,
    pub obstacle_violation: f64,
    pub newton_iterations: usize,
    #[serde(skip)]
    pub minimizer: Vec<f64>,
}

/// Elliptic p-capacity of the spatial node set `k_nodes` relative to Omega:
/// min int |grad u|^p over zero-trace u with u >= 1 on the set. Solved by an
/// active-set loop around the Dirichlet p-Laplace solve.
pub fn elliptic_capacity(
    k_nodes: &[bool],
    grid: &Arc<SpaceTimeGrid>,
    p: f64,
    tol: f64,
) -> Result<EllipticCapacityReport> {
    if k_nodes.len() != grid.num_nodes() {
        return Err(Error::Contract("mask shape does not match grid".into()));
    }
    for (i, &m) in k_nodes.iter().enumerate() {
        if m && grid.is_lateral_boundary(i) {
            return Err(Error::Geometry(
                "capacity set touches the lateral boundary".into(),
            ));
        }
    }
    if !k_nodes.iter().any(|&m| m) {
        return Ok(EllipticCapacityReport {
            value: 0.0,
            kkt_residual: 0.0,
            min_multiplier: 0.0,
            obstacle_violation: 0.0,
            newton_iterations: 0,
            minimizer: vec![0.0; grid.num_nodes()],
        });
    }
    let mut active: Vec<bool> = k_nodes.to_vec();
    let mut u = vec![0.0; grid.num_nodes()];
    for (i, &a) in active.iter().enumerate() {
        if a {
            u[i] = 1.0;
        }
    }
    let mut iterations = 0;
    let opts = NewtonOpts {
        tol,
        ..NewtonOpts::default()
    };
    for _sweep in 0..30 {
        let fixed: Vec<Option<f64>> = (0..grid.num_nodes())
            .map(|i| {
                if grid.is_lateral_boundary(i) {
                    Some(0.0)
                } else if active[i] {
                    Some(1.0)
                } else {
                    None
                }
            })
            .collect();
        let prob = SliceProblem {
            grid,
            p,
            eps: EPS_FINAL,
            alpha: 0.0,
            anchor: None,
            rhs: None,
            fixed: &fixed,
        };
        let stats = newton_minimize_continued(&prob, &mut u, EPS_FINAL, &opts)?;
        iterations += stats.newton_iterations;
        // multipliers: energy gradient at active nodes must be >= 0
        let full = SliceProblem {
            grid,
            p,
            eps: EPS_FINAL,
            alpha: 0.0,
            anchor: None,
            rhs: None,
            fixed: &zero_trace_fixed(grid),
        };
        let lambda = full.gradient(&u);
        let mut changed = false;
        for i in 0..grid.num_nodes() {
            if !k_nodes[i] {
                continue;
            }
            if active[i] && lambda[i] < -10.0 * tol {
                active[i] = false;
                changed = true;
            } else if !active[i] && u[i] < 1.0 - 10.0 * tol {
                active[i] = true;
                u[i] = 1.0;
                changed = true;
            }
        }
        if !changed {
            let min_mult = (0..grid.num_nodes())
                .filter(|&i| active[i])
                .map(|i| lambda[i])
                .fold(f64::INFINITY, f64::min);
            let violation = (0..grid.num_nodes())
                .filter(|&i| k_nodes[i])
                .map(|i| (1.0 - u[i]).max(0.0))
                .fold(0.0f64, f64::max);
            let kkt = (0..grid.num_nodes())
                .filter(|&i| !active[i])
                .map(|i| lambda[i].abs())
                .fold(0.0f64, f64::max);
            let value = lp_norm_grad_slice(grid, &u, p);
            return Ok(EllipticCapacityReport {
                value,
                kkt_residual: kkt,
                min_multiplier: if min_mult.is_finite() { min_mult } else { 0.0 },
                obstacle_violation: violation,
                newton_iterations: iterations,
                minimizer: u,
            });
        }
    }
    Err(Error::Solver {
        context: "elliptic capacity active-set loop".into(),
        iterations,
        residual: f64::NAN,
    })
}

/// Spatial nodes of a SetMask at one time level.
pub fn spatial_nodes_at_level(mask: &SetMask, level: usize) -> Vec<bool> {
    let nn = mask.grid.num_nodes();
    mask.mask[level * nn..(level + 1) * nn].to_vec()
}

#[derive(Debug, Clone)]
pub struct DualNormResult {
    pub value: f64,
    /// value^{p'}, the term entering the W-functional
    pub power: f64,
    /// witness potential per time level k = 1..M (levels() entries; entry 0 is unused zeros)
    pub witnesses: Vec<Vec<f64>>,
    pub max_slice_residual: f64,
}

impl DualNormResult {
    /// Witness flux F_k = |grad w_k|^{p-2} grad w_k, satisfying
    /// div F_k = dt-difference of v up to the slice solver residual.
    pub fn witness_flux(&self, grid: &Arc<SpaceTimeGrid>, p: f64) -> FluxField {
        let mut flux = FluxField::zeros(grid.clone());
        let nc = grid.num_cells();
        for k in 1..grid.num_levels() {
            let g = grad_slice(grid, &self.witnesses[k]);
            for cell in 0..nc {
                let m = g.magnitude_sq(cell);
                let w = if m > 0.0 {
                    m.powf((p - 2.0) / 2.0)
                } else {
                    0.0
                };
                for axis in 0..grid.dim() {
                    flux.comps[axis][k * nc + cell] = w * g.comps[axis][cell];
                }
            }
        }
        flux
    }
}

/// Dual norm of the discrete time derivative of v: for each level solves
/// -div(|grad w|^{p-2} grad w) = (v_k - v_{k-1})/dt and returns
/// (iint |grad w|^p)^{1/p'}.
pub fn dual_norm_dt(v: &ScalarField, p: f64, tol: f64) -> Result<DualNormResult> {
    let grid = v.grid.clone();
    if !v.has_zero_lateral_trace(1e-12) {
        return Err(Error::Contract(
            "dual norm requires zero lateral trace".into(),
        ));
    }
    let nn = grid.num_nodes();
    let mut witnesses = vec![vec![0.0; nn]; grid.num_levels()];
    let mut power = 0.0;
    let mut max_res = 0.0f64;
    for k in 1..grid.num_levels() {
        let prev = v.level(k - 1);
        let cur = v.level(k);
        let g: Vec<f64> = cur
            .iter()
            .zip(prev)
            .map(|(a, b)| (a - b) / grid.dt)
            .collect();
        let rhs = SpatialField {
            grid: grid.clone(),
            data: g,
        };
        let (w, stats) = solve_p_poisson(&rhs, p, tol)?;
        power += lp_norm_grad_slice(&grid, &w.data, p) * grid.dt;
        max_res = max_res.max(stats.residual);
        witnesses[k] = w.data;
    }
    let pprime = p / (p - 1.0);
    Ok(DualNormResult {
        value: power.powf(1.0 / pprime),
        power,
        witnesses,
        max_slice_residual: max_res,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FatnessReport {
    pub probe: Vec<f64>,
    pub radius: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
}

/// p-fatness ratio cap_e(E cap closed B_rho, B_2rho) / cap_e(closed B_rho, B_2rho)
/// computed on a local grid around the probe point. `complement` marks the
/// set E in local grid coordinates.
pub fn fatness_ratio(
    complement: impl Fn(&[f64]) -> bool,
    probe: &[f64],
    rho: f64,
    dim: usize,
    p: f64,
    nodes_per_axis: usize,
    tol: f64,
) -> Result<FatnessReport> {
    // local domain B_2rho(probe), approximated by its bounding box for n=1
    // and the disk for n=2
    let dom = match dim {
        1 => crate::stgrid::Domain::interval(probe[0] - 2.0 * rho, probe[0] + 2.0 * rho, 1.0, p)?,
        _ => crate::stgrid::Domain::disk([probe[0], probe[1]], 2.0 * rho, 1.0, p)?,
    };
    let grid = SpaceTimeGrid::build(dom, nodes_per_axis, 4)?;
    let ball: Vec<bool> = (0..grid.num_nodes())
        .map(|i| {
            let x = grid.node_coords(i);
            dist(&x, probe) <= rho + 1e-12 && grid.is_active(i)
        })
        .collect();
    let inter: Vec<bool> = (0..grid.num_nodes())
        .map(|i| {
            let x = grid.node_coords(i);
            ball[i] && complement(&x)
        })
        .collect();
    let den = elliptic_capacity(&ball, &grid, p, tol)?;
    let num = elliptic_capacity(&inter, &grid, p, tol)?;
    let ratio = if den.value > 0.0 {
        num.value / den.value
    } else {
        0.0
    };
    Ok(FatnessReport {
        probe: probe.to_vec(),
        radius: rho,
        numerator: num.value,
        denominator: den.value,
        ratio,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Hardy quotient int (|u| / dist(x, boundary))^p dx / int |grad u|^p dx
/// for a zero-trace spatial field.
pub fn hardy_quotient(grid: &SpaceTimeGrid, u: &[f64], p: f64) -> f64 {
    let w = grid.cell_volume();
    let mut num = 0.0;
    for i in 0..grid.num_nodes() {
        if !grid.is_active(i) {
            continue;
        }
        let x = grid.node_coords(i);
        let d = grid.domain.dist_to_boundary(&x).max(grid.h * 0.5);
        num += (u[i].abs() / d).powf(p) * w;
    }
    let den = lp_norm_grad_slice(grid, u, p);
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}
