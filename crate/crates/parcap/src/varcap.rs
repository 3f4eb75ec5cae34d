//! The W-functional iint |grad v|^p + ||dt v||_{V'}^{p'} + sup_t int v^2,
//! and the capacities obtained by minimizing it (variational capacity) or
//! the energy functional (energy capacity) over fields that are 1 on a
//! compact space-time set.

use serde::Serialize;
use std::time::Instant;

use crate::elliptic::{dual_norm_dt, solve_p_poisson, EPS_FINAL};
use crate::error::{Error, Result};
use crate::solver::{lbfgs_minimize, LbfgsOpts, SliceProblem};
use crate::stgrid::{
    lp_norm_grad, sup_t_l2, ScalarField, SetMask, SpatialField,
};
use crate::parabolic::mollified_indicator;

#[derive(Debug, Clone, Serialize)]
pub struct WNormBreakdown {
    /// iint |grad v|^p
    pub grad: f64,
    /// ||dt v||_{V'}^{p'}, already raised to the p' power
    pub dual: f64,
    /// sup over time levels of int v^2
    pub sup_l2: f64,
    pub total: f64,
    pub max_slice_residual: f64,
}

/// The three terms of the W-functional of a zero-trace field.
pub fn w_norm(v: &ScalarField, p: f64, tol: f64) -> Result<WNormBreakdown> {
    let grad = lp_norm_grad(v, p)?;
    let d = dual_norm_dt(v, p, tol)?;
    let sup = sup_t_l2(v);
    Ok(WNormBreakdown {
        grad,
        dual: d.power,
        sup_l2: sup,
        total: grad + d.power + sup,
        max_slice_residual: d.max_slice_residual,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityTerms {
    pub grad: f64,
    pub dual: f64,
    pub sup_l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityReport {
    pub value: f64,
    pub terms: CapacityTerms,
    /// worst slice-solver residual in the final dual evaluation
    pub slice_residual: f64,
    /// gradient norm of the smoothed objective at the reported minimizer
    pub stationarity: f64,
    pub iterations: usize,
    pub seconds: f64,
    #[serde(skip)]
    pub minimizer: Vec<f64>,
}

struct Dofs {
    /// free node index per space-time node, None when the value is fixed
    free: Vec<Option<usize>>,
    fixed_value: Vec<f64>,
    n_free: usize,
}

fn build_dofs(mask: &SetMask) -> Dofs {
    let grid = &mask.grid;
    let nn = grid.num_nodes();
    let total = nn * grid.num_levels();
    let mut free = vec![None; total];
    let mut fixed_value = vec![0.0; total];
    let mut n_free = 0;
    for k in 0..grid.num_levels() {
        for i in 0..nn {
            let idx = k * nn + i;
            if mask.mask[idx] {
                fixed_value[idx] = 1.0;
            } else if !grid.is_lateral_boundary(i) {
                free[idx] = Some(n_free);
                n_free += 1;
            }
        }
    }
    Dofs {
        free,
        fixed_value,
        n_free,
    }
}

fn assemble(dofs: &Dofs, x: &[f64], out: &mut [f64]) {
    for (idx, f) in dofs.free.iter().enumerate() {
        out[idx] = match f {
            Some(j) => x[*j],
            None => dofs.fixed_value[idx],
        };
    }
}

/// Shared capacity program: minimize
///   iint |grad v|^p + [dual term] + sup_coeff * sup_t int v^2
/// over zero-trace v with v = 1 on the set. The nonsmooth sup is replaced by
/// a power mean over levels with exponent driven up by continuation.
fn capacity_program(
    mask: &SetMask,
    p: f64,
    tol: f64,
    with_dual: bool,
    sup_coeff: f64,
) -> Result<CapacityReport> {
    let start = Instant::now();
    let grid = mask.grid.clone();
    if p <= 1.0 {
        return Err(Error::Config(format!("exponent must exceed 1, got {p}")));
    }
    if mask.is_empty() {
        return Ok(CapacityReport {
            value: 0.0,
            terms: CapacityTerms {
                grad: 0.0,
                dual: 0.0,
                sup_l2: 0.0,
            },
            slice_residual: 0.0,
            stationarity: 0.0,
            iterations: 0,
            seconds: start.elapsed().as_secs_f64(),
            minimizer: vec![0.0; grid.num_nodes() * grid.num_levels()],
        });
    }
    let nn = grid.num_nodes();
    let nl = grid.num_levels();
    let dofs = build_dofs(mask);
    let pprime = p / (p - 1.0);
    let cellw = grid.cell_volume();

    // warm start from the mollified indicator
    let seed = mollified_indicator(mask, 3.0 * grid.h);
    let mut x = vec![0.0; dofs.n_free];
    for (idx, f) in dofs.free.iter().enumerate() {
        if let Some(j) = f {
            x[*j] = seed.data[idx];
        }
    }

    // witness warm starts for the slice solves of the dual term
    let mut witnesses = vec![vec![0.0; nn]; nl];
    let mut full = vec![0.0; nn * nl];
    let mut slice_residual = 0.0f64;
    let mut iterations = 0;

    let stages: &[f64] = &[8.0, 32.0, 128.0];
    let mut result = None;
    for (si, &q) in stages.iter().enumerate() {
        let mut eval = |xs: &[f64], gout: &mut [f64]| -> f64 {
            assemble(&dofs, xs, &mut full);
            gout.iter_mut().for_each(|g| *g = 0.0);
            let mut value = 0.0;
            // spatial gradient term, slice by slice with right-endpoint rule
            let none_fixed = vec![None; nn];
            for k in 1..nl {
                let sl = &full[k * nn..(k + 1) * nn];
                let prob = SliceProblem {
                    grid: &grid,
                    p,
                    eps: EPS_FINAL,
                    alpha: 0.0,
                    anchor: None,
                    rhs: None,
                    fixed: &none_fixed,
                };
                value += p * prob.value(sl) * grid.dt;
                let gsl = prob.gradient(sl);
                for i in 0..nn {
                    if let Some(j) = dofs.free[k * nn + i] {
                        gout[j] += p * grid.dt * gsl[i];
                    }
                }
            }
            // dual term: slice p-Poisson solves on the time differences
            if with_dual {
                slice_residual = 0.0;
                for k in 1..nl {
                    let cur = &full[k * nn..(k + 1) * nn];
                    let prev = &full[(k - 1) * nn..k * nn];
                    let g: Vec<f64> = cur
                        .iter()
                        .zip(prev)
                        .map(|(a, b)| (a - b) / grid.dt)
                        .collect();
                    let rhs = SpatialField {
                        grid: grid.clone(),
                        data: g,
                    };
                    // warm start from the previous outer iterate; a loose
                    // residual is enough here because the reported terms are
                    // re-evaluated with the tight tolerance at the minimizer.
                    // The target scales with the data, else steep slices (rhs
                    // of order 1/dt) push Newton into its stagnation floor
                    let gmax = rhs.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
                    let tol_inner = (100.0 * tol).min(1e-5) * (cellw * gmax).max(1.0);
                    let (w, stats) = match solve_with_warm(&rhs, p, tol_inner, &witnesses[k]) {
                        Ok(r) => r,
                        Err(_) => {
                            // cold restart once before giving up on the warm start
                            (solve_p_poisson(&rhs, p, tol_inner)).unwrap_or_else(|_| {
                                (SpatialField::zeros(grid.clone()), Default::default())
                            })
                        }
                    };
                    slice_residual = slice_residual.max(stats.residual);
                    value += crate::stgrid::lp_norm_grad_slice(&grid, &w.data, p) * grid.dt;
                    // envelope gradient: p' h^n (w_k - w_{k+1}) at level k,
                    // accumulated as +w_k here and -w_k at level k-1
                    for i in 0..nn {
                        let c = pprime * cellw * w.data[i];
                        if let Some(j) = dofs.free[k * nn + i] {
                            gout[j] += c;
                        }
                        if let Some(j) = dofs.free[(k - 1) * nn + i] {
                            gout[j] -= c;
                        }
                    }
                    witnesses[k] = w.data;
                }
            }
            // smoothed sup: power mean of the per-level L2 masses
            let a: Vec<f64> = (0..nl)
                .map(|k| {
                    full[k * nn..(k + 1) * nn]
                        .iter()
                        .map(|v| v * v)
                        .sum::<f64>()
                        * cellw
                })
                .collect();
            let amax = a.iter().cloned().fold(0.0f64, f64::max);
            if amax > 0.0 {
                let sum: f64 = a.iter().map(|v| (v / amax).powf(q)).sum();
                let s = amax * sum.powf(1.0 / q);
                value += sup_coeff * s;
                // dS/da_k = (a_k / (amax sum^{1/q}))^{q-1} ... computed stably
                for k in 0..nl {
                    if a[k] == 0.0 {
                        continue;
                    }
                    let dsda = ((a[k] / amax).powf(q - 1.0)) * sum.powf(1.0 / q - 1.0);
                    let c = sup_coeff * dsda * 2.0 * cellw;
                    for i in 0..nn {
                        if let Some(j) = dofs.free[k * nn + i] {
                            gout[j] += c * full[k * nn + i];
                        }
                    }
                }
            }
            value
        };
        // the final value is re-evaluated exactly at the last iterate, so
        // early stages only need to park near the basin
        let last_stage = si + 1 == stages.len();
        let opts = LbfgsOpts {
            max_iterations: if last_stage { 260 } else { 120 },
            rel_tol: if last_stage { 1e-8 } else { 1e-6 },
            grad_tol: if last_stage { 1e-7 } else { 1e-5 },
            ..LbfgsOpts::default()
        };
        let r = lbfgs_minimize(&mut eval, &mut x, &opts);
        iterations += r.iterations;
        result = Some(r);
    }
    let last = result.unwrap();

    // report exact terms of the final iterate
    assemble(&dofs, &x, &mut full);
    let v = ScalarField {
        grid: grid.clone(),
        data: full.clone(),
    };
    let grad_term = lp_norm_grad(&v, p)?;
    let (dual_term, dual_res) = if with_dual {
        let d = dual_norm_dt(&v, p, tol)?;
        (d.power, d.max_slice_residual)
    } else {
        (0.0, 0.0)
    };
    let sup_term = sup_t_l2(&v);
    Ok(CapacityReport {
        value: grad_term + dual_term + sup_coeff * sup_term,
        terms: CapacityTerms {
            grad: grad_term,
            dual: dual_term,
            sup_l2: sup_term,
        },
        slice_residual: slice_residual.max(dual_res),
        stationarity: last.grad_norm,
        iterations,
        seconds: start.elapsed().as_secs_f64(),
        minimizer: full,
    })
}

fn solve_with_warm(
    rhs: &SpatialField,
    p: f64,
    tol: f64,
    warm: &[f64],
) -> Result<(SpatialField, crate::solver::SolveStats)> {
    let grid = rhs.grid.clone();
    if rhs.data.iter().all(|&v| v == 0.0) {
        return Ok((SpatialField::zeros(grid), Default::default()));
    }
    let fixed: Vec<Option<f64>> = (0..grid.num_nodes())
        .map(|i| {
            if grid.is_lateral_boundary(i) {
                Some(0.0)
            } else {
                None
            }
        })
        .collect();
    let prob = SliceProblem {
        grid: &grid,
        p,
        eps: EPS_FINAL,
        alpha: 0.0,
        anchor: None,
        rhs: Some(&rhs.data),
        fixed: &fixed,
    };
    let mut w = SpatialField {
        grid: grid.clone(),
        data: warm.to_vec(),
    };
    let opts = crate::solver::NewtonOpts {
        tol,
        ..Default::default()
    };
    // a warm iterate is usually already in the basin at the final epsilon;
    // fall back to full continuation only when direct Newton fails
    if warm.iter().any(|&v| v != 0.0) {
        if let Ok(stats) = crate::solver::newton_minimize(&prob, &mut w.data, &opts) {
            return Ok((w, stats));
        }
        w.data.copy_from_slice(warm);
    }
    let stats = crate::solver::newton_minimize_continued(&prob, &mut w.data, EPS_FINAL, &opts)?;
    Ok((w, stats))
}

/// Variational capacity: inf of the W-functional over zero-trace fields
/// equal to 1 on the set.
pub fn variational_capacity(mask: &SetMask, p: f64, tol: f64) -> Result<CapacityReport> {
    capacity_program(mask, p, tol, true, 1.0)
}

/// Energy capacity: inf of sup_t (1/2) int v^2 + iint |grad v|^p over the
/// same admissible class.
pub fn energy_capacity(mask: &SetMask, p: f64, tol: f64) -> Result<CapacityReport> {
    capacity_program(mask, p, tol, false, 0.5)
}

/// Capacity of a union together with the values of the parts, for
/// power-subadditivity checks with exponent s = 1 / max(p, p').
pub fn capacity_of_union(
    parts: &[SetMask],
    p: f64,
    tol: f64,
) -> Result<(CapacityReport, Vec<f64>)> {
    if parts.is_empty() {
        return Err(Error::Contract("union of no parts".into()));
    }
    let mut joined = parts[0].clone();
    let mut values = Vec::with_capacity(parts.len());
    for part in parts {
        values.push(variational_capacity(part, p, tol)?.value);
    }
    for part in &parts[1..] {
        joined = joined.union(part);
    }
    let whole = variational_capacity(&joined, p, tol)?;
    Ok((whole, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stgrid::{rasterize, Domain, ShapeSpec, SpaceTimeGrid};
    use std::sync::Arc;

    fn unit_grid(n: usize, m: usize) -> Arc<SpaceTimeGrid> {
        SpaceTimeGrid::build(Domain::interval(0.0, 1.0, 1.0, 2.0).unwrap(), n, m).unwrap()
    }

    #[test]
    fn w_norm_combines_known_terms() {
        // v = t sin(pi x), p = 2: grad = int t^2 dt * pi^2/2,
        // dual = T/(2 pi^2), sup = int sin^2 = 1/2
        let g = unit_grid(257, 16);
        let g2_dt = g.dt;
        let pi = std::f64::consts::PI;
        let v = ScalarField::from_fn(g, |x, t| t * (pi * x[0]).sin());
        let w = w_norm(&v, 2.0, 1e-11).unwrap();
        // time quadrature is the right-endpoint sum, so compare against it
        let tsum: f64 = (1..=16).map(|k| g2_dt * (k as f64 * g2_dt).powi(2)).sum();
        let grad_exact = tsum * pi * pi / 2.0;
        assert!((w.grad - grad_exact).abs() < 0.01 * grad_exact, "grad {}", w.grad);
        let dual_exact = 1.0 / (2.0 * pi * pi);
        assert!((w.dual - dual_exact).abs() < 0.02 * dual_exact, "dual {}", w.dual);
        assert!((w.sup_l2 - 0.5).abs() < 0.01, "sup {}", w.sup_l2);
        assert!((w.total - (w.grad + w.dual + w.sup_l2)).abs() < 1e-14);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let g = unit_grid(9, 4);
        let mask_spec = ShapeSpec::Cylinder {
            center: vec![0.5],
            t_end: 0.75,
            radius: 0.13,
            duration: 0.25,
        };
        let mask = rasterize(&mask_spec, &g).unwrap();
        let p = 2.5;
        let grid = mask.grid.clone();
        let nn = grid.num_nodes();
        let nl = grid.num_levels();
        let dofs = build_dofs(&mask);
        // the same smoothed objective the program minimizes, at fixed q
        let q = 8.0;
        let objective = |x: &[f64], gout: Option<&mut [f64]>| -> f64 {
            let mut full = vec![0.0; nn * nl];
            assemble(&dofs, x, &mut full);
            let v = ScalarField {
                grid: grid.clone(),
                data: full.clone(),
            };
            let grad_term = lp_norm_grad(&v, p).unwrap();
            let d = dual_norm_dt(&v, p, 1e-12).unwrap();
            let a: Vec<f64> = (0..nl)
                .map(|k| {
                    full[k * nn..(k + 1) * nn]
                        .iter()
                        .map(|u| u * u)
                        .sum::<f64>()
                        * grid.cell_volume()
                })
                .collect();
            let amax = a.iter().cloned().fold(0.0f64, f64::max);
            let sum: f64 = a.iter().map(|v| (v / amax).powf(q)).sum();
            let sup = amax * sum.powf(1.0 / q);
            if let Some(gout) = gout {
                let cellw = grid.cell_volume();
                let pprime = p / (p - 1.0);
                gout.iter_mut().for_each(|v| *v = 0.0);
                let none_fixed = vec![None; nn];
                for k in 1..nl {
                    let sl = &full[k * nn..(k + 1) * nn];
                    let prob = SliceProblem {
                        grid: &grid,
                        p,
                        eps: EPS_FINAL,
                        alpha: 0.0,
                        anchor: None,
                        rhs: None,
                        fixed: &none_fixed,
                    };
                    let gsl = prob.gradient(sl);
                    for i in 0..nn {
                        if let Some(j) = dofs.free[k * nn + i] {
                            gout[j] += p * grid.dt * gsl[i];
                        }
                    }
                    for i in 0..nn {
                        let c = pprime * cellw * d.witnesses[k][i];
                        if let Some(j) = dofs.free[k * nn + i] {
                            gout[j] += c;
                        }
                        if let Some(j) = dofs.free[(k - 1) * nn + i] {
                            gout[j] -= c;
                        }
                    }
                }
                for k in 0..nl {
                    if a[k] == 0.0 {
                        continue;
                    }
                    let dsda = (a[k] / amax).powf(q - 1.0) * sum.powf(1.0 / q - 1.0);
                    for i in 0..nn {
                        if let Some(j) = dofs.free[k * nn + i] {
                            gout[j] += dsda * 2.0 * cellw * full[k * nn + i];
                        }
                    }
                }
            }
            grad_term + d.power + sup
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x0: Vec<f64> = (0..dofs.n_free).map(|_| 0.3 + 0.4 * rng.gen::<f64>()).collect();
        let mut analytic = vec![0.0; dofs.n_free];
        objective(&x0, Some(&mut analytic));
        let hstep = 1e-6;
        let mut worst = 0.0f64;
        for j in (0..dofs.n_free).step_by(7) {
            let mut xp = x0.clone();
            xp[j] += hstep;
            let mut xm = x0.clone();
            xm[j] -= hstep;
            let fd = (objective(&xp, None) - objective(&xm, None)) / (2.0 * hstep);
            worst = worst.max((fd - analytic[j]).abs());
        }
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1.0);
        assert!(worst < 2e-4 * scale, "fd mismatch {worst} at scale {scale}");
    }

    #[test]
    fn empty_set_zero() {
        let g = unit_grid(17, 6);
        let mask = SetMask::empty(g);
        let r = variational_capacity(&mask, 2.5, 1e-9).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn capacity_positive_and_monotone() {
        let g = unit_grid(33, 10);
        let small = rasterize(
            &ShapeSpec::Cylinder {
                center: vec![0.5],
                t_end: 0.7,
                radius: 0.1,
                duration: 0.3,
            },
            &g,
        )
        .unwrap();
        let large = rasterize(
            &ShapeSpec::Cylinder {
                center: vec![0.5],
                t_end: 0.8,
                radius: 0.2,
                duration: 0.5,
            },
            &g,
        )
        .unwrap();
        let cs = variational_capacity(&small, 2.0, 1e-9).unwrap();
        let cl = variational_capacity(&large, 2.0, 1e-9).unwrap();
        assert!(cs.value > 0.0);
        // smoothing overestimates the sup slightly; allow a whisker
        assert!(cs.value <= 1.02 * cl.value, "{} vs {}", cs.value, cl.value);
    }

    #[test]
    fn energy_below_variational() {
        // the energy functional drops the dual term and halves the sup term
        let g = unit_grid(33, 10);
        let mask = rasterize(
            &ShapeSpec::Cylinder {
                center: vec![0.5],
                t_end: 0.75,
                radius: 0.15,
                duration: 0.35,
            },
            &g,
        )
        .unwrap();
        let var = variational_capacity(&mask, 2.0, 1e-9).unwrap();
        let en = energy_capacity(&mask, 2.0, 1e-9).unwrap();
        assert!(en.value <= var.value + 1e-9, "{} vs {}", en.value, var.value);
        assert!(en.value > 0.0);
    }

    #[test]
    fn union_subadditivity_power() {
        let g = unit_grid(33, 10);
        let a = rasterize(
            &ShapeSpec::Cylinder {
                center: vec![0.3],
                t_end: 0.6,
                radius: 0.08,
                duration: 0.2,
            },
            &g,
        )
        .unwrap();
        let b = rasterize(
            &ShapeSpec::Cylinder {
                center: vec![0.7],
                t_end: 0.85,
                radius: 0.1,
                duration: 0.25,
            },
            &g,
        )
        .unwrap();
        let p: f64 = 2.5;
        let s = 1.0 / p.max(p / (p - 1.0));
        let (whole, parts) = capacity_of_union(&[a, b], p, 1e-9).unwrap();
        let lhs = whole.value.powf(s);
        let rhs: f64 = parts.iter().map(|v| v.powf(s)).sum();
        assert!(lhs <= rhs * 1.02, "{lhs} vs {rhs}");
    }
}
