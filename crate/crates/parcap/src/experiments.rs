//! Experiment drivers: cylinder scaling sweeps, the three-capacity
//! equivalence study, and inequality ledgers with empirical constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

use crate::elliptic::dual_norm_dt;
use crate::error::{Error, Result};
use crate::parabolic::{balayage, energy_norm, measure_capacity};
use crate::report::loglog_fit;
use crate::stgrid::{
    grad_slice, rasterize, Domain, GraphProfile, Provenance, ScalarField, SetMask, ShapeSpec,
    SpaceTimeGrid,
};
use crate::varcap::variational_capacity;

#[derive(Debug, Clone, Serialize)]
pub struct ScalingPoint {
    pub rho: f64,
    /// duration after snapping to time levels (0 for slices)
    pub tau: f64,
    pub value: f64,
    pub grad: f64,
    pub dual: f64,
    pub sup_l2: f64,
    /// space-time volume of the rasterized set
    pub volume: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub dim: usize,
    pub p: f64,
    pub tau_points: Vec<ScalingPoint>,
    pub slice_points: Vec<ScalingPoint>,
    /// slope of log value vs log tau at fixed rho
    pub tau_slope: Option<f64>,
    /// slope of log value vs log rho for slices
    pub rho_slope: Option<f64>,
    pub failures: Vec<String>,
}

fn sweep_domain(dim: usize, rho: f64, total_time: f64, p: f64) -> Result<Domain> {
    match dim {
        1 => Domain::interval(-2.0 * rho, 2.0 * rho, total_time, p),
        _ => Domain::square(-2.0 * rho, 2.0 * rho, total_time, p),
    }
}

fn snapped_duration(mask: &SetMask) -> f64 {
    match &mask.provenance {
        Provenance::Cylinder {
            snapped_duration, ..
        } => *snapped_duration,
        _ => 0.0,
    }
}

fn capacity_point(mask: &SetMask, rho: f64, p: f64, tol: f64) -> Result<ScalingPoint> {
    let rep = variational_capacity(mask, p, tol)?;
    Ok(ScalingPoint {
        rho,
        tau: snapped_duration(mask),
        value: rep.value,
        grad: rep.terms.grad,
        dual: rep.terms.dual,
        sup_l2: rep.terms.sup_l2,
        volume: mask.volume(),
        seconds: rep.seconds,
    })
}

/// Capacity of cylinders over a tau sweep at fixed rho (domain B_2rho), and
/// of slices over a rho sweep, with log-log fits of the two scaling laws.
pub fn run_cylinder_scaling(
    dim: usize,
    p: f64,
    nodes: usize,
    steps: usize,
    rho_fixed: f64,
    taus: &[f64],
    slice_rhos: &[f64],
    tol: f64,
) -> Result<ScalingReport> {
    let center = vec![0.0; dim];
    let tau_results: Vec<std::result::Result<ScalingPoint, String>> = taus
        .par_iter()
        .map(|&tau| {
            let run = || -> Result<ScalingPoint> {
                let total_time = 1.25 * tau;
                let dom = sweep_domain(dim, rho_fixed, total_time, p)?;
                let grid = SpaceTimeGrid::build(dom, nodes, steps)?;
                let spec = ShapeSpec::Cylinder {
                    center: center.clone(),
                    t_end: total_time,
                    radius: rho_fixed,
                    duration: tau,
                };
                let mask = rasterize(&spec, &grid)?;
                capacity_point(&mask, rho_fixed, p, tol)
            };
            run().map_err(|e| format!("tau={tau}: {e}"))
        })
        .collect();
    let slice_results: Vec<std::result::Result<ScalingPoint, String>> = slice_rhos
        .par_iter()
        .map(|&rho| {
            let run = || -> Result<ScalingPoint> {
                // parabolic horizon: the discrete problem is then an exact
                // rescaling across rho, which keeps the fitted slope clean
                let total_time = rho.powf(p);
                let dom = sweep_domain(dim, rho, total_time, p)?;
                let grid = SpaceTimeGrid::build(dom, nodes, steps)?;
                let spec = ShapeSpec::Slice {
                    center: center.clone(),
                    radius: rho,
                    time: 0.5 * total_time,
                };
                let mask = rasterize(&spec, &grid)?;
                capacity_point(&mask, rho, p, tol)
            };
            run().map_err(|e| format!("rho={rho}: {e}"))
        })
        .collect();
    let mut failures = Vec::new();
    let mut tau_points = Vec::new();
    for r in tau_results {
        match r {
            Ok(pt) => tau_points.push(pt),
            Err(e) => failures.push(e),
        }
    }
    let mut slice_points = Vec::new();
    for r in slice_results {
        match r {
            Ok(pt) => slice_points.push(pt),
            Err(e) => failures.push(e),
        }
    }
    tau_points.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    slice_points.sort_by(|a, b| a.rho.total_cmp(&b.rho));
    let tau_slope = if tau_points.len() >= 2 {
        loglog_fit(
            &tau_points
                .iter()
                .map(|pt| (pt.tau, pt.value))
                .collect::<Vec<_>>(),
        )
        .ok()
        .map(|(s, _)| s)
    } else {
        None
    };
    let rho_slope = if slice_points.len() >= 2 {
        loglog_fit(
            &slice_points
                .iter()
                .map(|pt| (pt.rho, pt.value))
                .collect::<Vec<_>>(),
        )
        .ok()
        .map(|(s, _)| s)
    } else {
        None
    };
    Ok(ScalingReport {
        dim,
        p,
        tau_points,
        slice_points,
        tau_slope,
        rho_slope,
        failures,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalencePoint {
    pub label: String,
    pub cap_var: f64,
    /// energy functional of the balayage potential
    pub energy: f64,
    pub cap_measure: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub p: f64,
    pub points: Vec<EquivalencePoint>,
    /// smallest B with all pairwise ratios in [1/B, B]
    pub band: f64,
    pub failures: Vec<String>,
}

/// Five standard test sets well inside the unit cylinder geometry:
/// two cylinders, a slice, a graph set, and a two-cylinder union.
pub fn standard_test_sets(halfwidth: f64, total_time: f64, dim: usize) -> Vec<(String, ShapeSpec)> {
    let a = halfwidth;
    let t = total_time;
    let c = |x: f64| {
        let mut v = vec![x];
        if dim == 2 {
            v.push(0.0);
        }
        v
    };
    vec![
        (
            "cylinder-wide".into(),
            ShapeSpec::Cylinder {
                center: c(0.0),
                t_end: 0.8 * t,
                radius: 0.35 * a,
                duration: 0.4 * t,
            },
        ),
        (
            "cylinder-thin".into(),
            ShapeSpec::Cylinder {
                center: c(0.15 * a),
                t_end: 0.9 * t,
                radius: 0.2 * a,
                duration: 0.55 * t,
            },
        ),
        (
            "slice".into(),
            ShapeSpec::Slice {
                center: c(0.0),
                radius: 0.3 * a,
                time: 0.5 * t,
            },
        ),
        (
            "graph".into(),
            ShapeSpec::Graph {
                center: c(0.0),
                radius: 0.3 * a,
                base_time: 0.45 * t,
                profile: GraphProfile::Bump { amp: 0.25 * t },
            },
        ),
        (
            "union".into(),
            ShapeSpec::Union(vec![
                ShapeSpec::Cylinder {
                    center: c(-0.3 * a),
                    t_end: 0.65 * t,
                    radius: 0.15 * a,
                    duration: 0.25 * t,
                },
                ShapeSpec::Cylinder {
                    center: c(0.35 * a),
                    t_end: 0.9 * t,
                    radius: 0.18 * a,
                    duration: 0.3 * t,
                },
            ]),
        ),
    ]
}

/// cap_var, the energy of the balayage, and the Riesz mass, per set, with
/// the smallest common ratio band.
pub fn run_equivalence(
    grid: &Arc<SpaceTimeGrid>,
    sets: &[(String, ShapeSpec)],
    p: f64,
    tol: f64,
) -> Result<EquivalenceReport> {
    let results: Vec<std::result::Result<EquivalencePoint, String>> = sets
        .par_iter()
        .map(|(label, spec)| {
            let run = || -> Result<EquivalencePoint> {
                let mask = rasterize(spec, grid)?;
                let var = variational_capacity(&mask, p, tol)?;
                let bal = balayage(&mask, p, None, tol)?;
                let en = energy_norm(&bal.potential, p)?;
                let (meas, _) = measure_capacity(&mask, p, tol)?;
                Ok(EquivalencePoint {
                    label: label.clone(),
                    cap_var: var.value,
                    energy: en,
                    cap_measure: meas,
                })
            };
            run().map_err(|e| format!("{label}: {e}"))
        })
        .collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(pt) => points.push(pt),
            Err(e) => failures.push(e),
        }
    }
    points.sort_by(|a, b| a.label.cmp(&b.label));
    let mut band = 1.0f64;
    for pt in &points {
        let vals = [pt.cap_var, pt.energy, pt.cap_measure];
        for i in 0..3 {
            for j in i + 1..3 {
                if vals[i] <= 0.0 || vals[j] <= 0.0 {
                    return Err(Error::Contract(format!(
                        "nonpositive capacity on set {}",
                        pt.label
                    )));
                }
                let r = vals[i] / vals[j];
                band = band.max(r.max(1.0 / r));
            }
        }
    }
    Ok(EquivalenceReport {
        p,
        points,
        band,
        failures,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Ledger {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// empirical constant lhs / rhs
    pub constant: f64,
}

impl Ledger {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        Ledger {
            name: name.into(),
            lhs,
            rhs,
            constant: if rhs > 0.0 { lhs / rhs } else { f64::INFINITY },
        }
    }
}

/// Caccioppoli-type inequality at epsilon = 1/2 for the nonnegative
/// supersolution u = potential + 1 against a fixed smooth product cutoff:
///   iint u^{-3/2}|grad u|^p phi^p + 2 sup_t int u^{1/2} phi^p
///   <= C [ eps^{-p} iint u^{p-3/2}|grad phi|^p + 8 iint u^{1/2}|dt phi^p| ]
pub fn caccioppoli_ledger(potential: &ScalarField, p: f64) -> Ledger {
    let grid = &potential.grid;
    let a = {
        let (lo, hi) = grid.domain.bounds(0);
        0.45 * (hi - lo)
    };
    let tt = grid.domain.total_time;
    let pi = std::f64::consts::PI;
    let cut = |x: &[f64], t: f64| -> f64 {
        let mut v = (pi * t / tt).sin().powi(2);
        for &xi in x {
            if xi.abs() >= a {
                return 0.0;
            }
            v *= (pi * xi / (2.0 * a)).cos().powi(2);
        }
        v
    };
    let dcut_dt = |x: &[f64], t: f64| -> f64 {
        let mut v = 2.0 * (pi * t / tt).sin() * (pi * t / tt).cos() * pi / tt;
        for &xi in x {
            if xi.abs() >= a {
                return 0.0;
            }
            v *= (pi * xi / (2.0 * a)).cos().powi(2);
        }
        v
    };
    let grad_cut_mag = |x: &[f64], t: f64| -> f64 {
        let s = (pi * t / tt).sin().powi(2);
        let mut sq = 0.0;
        for (axis, &xi) in x.iter().enumerate() {
            if xi.abs() >= a {
                return 0.0;
            }
            let mut d = 2.0
                * (pi * xi / (2.0 * a)).cos()
                * (pi * xi / (2.0 * a)).sin()
                * pi
                / (2.0 * a);
            for (other, &xo) in x.iter().enumerate() {
                if other != axis {
                    d *= (pi * xo / (2.0 * a)).cos().powi(2);
                }
            }
            sq += d * d;
        }
        s * sq.sqrt()
    };
    let eps = 0.5;
    let w = grid.cell_volume();
    let nn = grid.num_nodes();
    let mut lhs_grad = 0.0;
    let mut lhs_sup = 0.0f64;
    let mut rhs_grad = 0.0;
    let mut rhs_dt = 0.0;
    for k in 0..grid.num_levels() {
        let t = grid.time(k);
        let slice = potential.level(k);
        let mut sup_k = 0.0;
        for i in 0..nn {
            let u = slice[i] + 1.0;
            let x = grid.node_coords(i);
            let phi = cut(&x, t);
            sup_k += u.powf(1.0 - eps) * phi.powf(p) * w;
            if k >= 1 {
                // |dt phi^p| = p phi^{p-1} |dt phi|
                rhs_dt += u.powf(1.0 - eps)
                    * p
                    * phi.powf(p - 1.0)
                    * dcut_dt(&x, t).abs()
                    * w
                    * grid.dt;
            }
        }
        lhs_sup = lhs_sup.max(sup_k / (1.0 - eps));
        if k == 0 {
            continue;
        }
        let gu = grad_slice(grid, slice);
        for cell in 0..grid.num_cells() {
            let (xc, ubar) = cell_center_and_mean(grid, slice, cell);
            let u = ubar + 1.0;
            let phi = cut(&xc, t);
            let gmag = gu.magnitude_sq(cell).sqrt();
            lhs_grad += u.powf(-1.0 - eps) * gmag.powf(p) * phi.powf(p) * w * grid.dt;
            rhs_grad += eps.powf(-p)
                * u.powf(p - 1.0 - eps)
                * grad_cut_mag(&xc, t).powf(p)
                * w
                * grid.dt;
        }
    }
    let lhs = lhs_grad + lhs_sup;
    let rhs = rhs_grad + 2.0 / (eps * (1.0 - eps)) * rhs_dt;
    Ledger::new("caccioppoli", lhs, rhs)
}

fn cell_center_and_mean(grid: &SpaceTimeGrid, v: &[f64], cell: usize) -> (Vec<f64>, f64) {
    let n = grid.nodes_per_axis;
    match grid.dim() {
        1 => {
            let x = 0.5 * (grid.axis_coords(0)[cell] + grid.axis_coords(0)[cell + 1]);
            (vec![x], 0.5 * (v[cell] + v[cell + 1]))
        }
        _ => {
            let nc = n - 1;
            let ci = cell % nc;
            let cj = cell / nc;
            let x = 0.5 * (grid.axis_coords(0)[ci] + grid.axis_coords(0)[ci + 1]);
            let y = 0.5 * (grid.axis_coords(1)[cj] + grid.axis_coords(1)[cj + 1]);
            let sw = cj * n + ci;
            let mean = 0.25 * (v[sw] + v[sw + 1] + v[sw + n] + v[sw + n + 1]);
            (vec![x, y], mean)
        }
    }
}

/// Poincare-type inequality on the full cylinder Q = Omega x (0,T) with
/// Omega = B_rho and T = rho^p:
///   mean |u - (u)_Q|^p <= C [ rho^p mean |grad u|^p + (rho^{p-1} mean|F|)^p ]
/// where F is the witness flux representing the time derivative.
pub fn poincare_ledger(u: &ScalarField, p: f64, tol: f64) -> Result<Ledger> {
    let grid = u.grid.clone();
    let (lo, hi) = grid.domain.bounds(0);
    let rho = 0.5 * (hi - lo);
    let d = dual_norm_dt(u, p, tol)?;
    let flux = d.witness_flux(&grid, p);
    let nl = grid.num_levels();
    let mut active_nodes = 0usize;
    let mut mean_u = 0.0;
    for k in 0..nl {
        for (i, &v) in u.level(k).iter().enumerate() {
            if grid.is_active(i) {
                mean_u += v;
                active_nodes += 1;
            }
        }
    }
    mean_u /= active_nodes as f64;
    let mut lhs = 0.0;
    for k in 0..nl {
        for (i, &v) in u.level(k).iter().enumerate() {
            if grid.is_active(i) {
                lhs += (v - mean_u).abs().powf(p);
            }
        }
    }
    lhs /= active_nodes as f64;
    let nc = grid.num_cells();
    let mut mean_grad_p = 0.0;
    let mut mean_f = 0.0;
    let mut cells = 0usize;
    for k in 1..nl {
        let gu = grad_slice(&grid, u.level(k));
        for cell in 0..nc {
            mean_grad_p += gu.magnitude_sq(cell).powf(p / 2.0);
            let mut fsq = 0.0;
            for axis in 0..grid.dim() {
                let fv = flux.comps[axis][k * nc + cell];
                fsq += fv * fv;
            }
            mean_f += fsq.sqrt();
            cells += 1;
        }
    }
    mean_grad_p /= cells as f64;
    mean_f /= cells as f64;
    let rhs = rho.powf(p) * mean_grad_p + (rho.powf(p - 1.0) * mean_f).powf(p);
    Ok(Ledger::new("poincare", lhs, rhs))
}

/// Gluing estimate: some radius in (rho/2, rho) has slicewise averages with
///   |(u)(t2) - (u)(t1)| <= 2^{n+2} rho^{p-1} mean_Q |F|;
/// the best sampled radius is reported against that right-hand side.
pub fn gluing_ledger(u: &ScalarField, p: f64, tol: f64) -> Result<Ledger> {
    let grid = u.grid.clone();
    let (lo, hi) = grid.domain.bounds(0);
    let rho = 0.5 * (hi - lo);
    let cx = 0.5 * (lo + hi);
    let d = dual_norm_dt(u, p, tol)?;
    let flux = d.witness_flux(&grid, p);
    let nc = grid.num_cells();
    let nl = grid.num_levels();
    let mut mean_f = 0.0;
    let mut cells = 0usize;
    for k in 1..nl {
        for cell in 0..nc {
            let mut fsq = 0.0;
            for axis in 0..grid.dim() {
                let fv = flux.comps[axis][k * nc + cell];
                fsq += fv * fv;
            }
            mean_f += fsq.sqrt();
            cells += 1;
        }
    }
    mean_f /= cells as f64;
    let mut best = f64::INFINITY;
    for frac in [0.55, 0.65, 0.75, 0.85, 0.95] {
        let r = frac * rho;
        let mut osc_lo = f64::INFINITY;
        let mut osc_hi = f64::NEG_INFINITY;
        for k in 0..nl {
            let slice = u.level(k);
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in 0..grid.num_nodes() {
                let x = grid.node_coords(i);
                let dist: f64 = x
                    .iter()
                    .map(|&xi| (xi - cx) * (xi - cx))
                    .sum::<f64>()
                    .sqrt();
                if dist <= r {
                    sum += slice[i];
                    count += 1;
                }
            }
            let avg = sum / count.max(1) as f64;
            osc_lo = osc_lo.min(avg);
            osc_hi = osc_hi.max(avg);
        }
        best = best.min(osc_hi - osc_lo);
    }
    let n = grid.dim() as f64;
    let rhs = 2.0f64.powf(n + 2.0) * rho.powf(p - 1.0) * mean_f;
    Ok(Ledger::new("gluing", best, rhs))
}

/// Measure bound over a sweep: max of |E| / cap^{(n+p)/n}.
pub fn measure_bound_ledger(points: &[ScalingPoint], dim: usize, p: f64) -> Ledger {
    let exp = (dim as f64 + p) / dim as f64;
    let mut worst: Option<(f64, f64)> = None;
    for pt in points {
        if pt.value <= 0.0 {
            continue;
        }
        let rhs = pt.value.powf(exp);
        let ratio = pt.volume / rhs;
        if worst.map(|(l, r)| ratio > l / r).unwrap_or(true) {
            worst = Some((pt.volume, rhs));
        }
    }
    let (lhs, rhs) = worst.unwrap_or((0.0, 1.0));
    Ledger::new("measure-bound", lhs, rhs)
}

#[derive(Debug, Clone, Serialize)]
pub struct PairCheck {
    pub nested: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairSummary {
    pub checks: Vec<PairCheck>,
    pub all_ok: bool,
}

/// Random nested pairs (monotonicity) and disjoint pairs (power
/// subadditivity with s = 1/max(p,p')) of cylinders, with `slack` relative
/// tolerance.
pub fn random_pair_checks(
    grid: &Arc<SpaceTimeGrid>,
    p: f64,
    tol: f64,
    count: usize,
    seed: u64,
    slack: f64,
) -> Result<PairSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = grid.domain.bounds(0);
    let a = 0.5 * (hi - lo);
    let tt = grid.domain.total_time;
    let s = 1.0 / p.max(p / (p - 1.0));
    let dim = grid.dim();
    let mut specs: Vec<(bool, ShapeSpec, ShapeSpec)> = Vec::new();
    for j in 0..count {
        let nested = j % 2 == 0;
        if nested {
            let r_big = a * (0.25 + 0.2 * rng.gen::<f64>());
            let c: Vec<f64> = (0..dim)
                .map(|_| (a - r_big - 3.0 * grid.h) * (2.0 * rng.gen::<f64>() - 1.0) * 0.5)
                .collect();
            let t_end = tt * (0.6 + 0.3 * rng.gen::<f64>());
            let dur = t_end * (0.3 + 0.4 * rng.gen::<f64>());
            let big = ShapeSpec::Cylinder {
                center: c.clone(),
                t_end,
                radius: r_big,
                duration: dur,
            };
            let small = ShapeSpec::Cylinder {
                center: c,
                t_end: t_end - 0.1 * dur,
                radius: r_big * (0.4 + 0.3 * rng.gen::<f64>()),
                duration: dur * 0.6,
            };
            specs.push((true, small, big));
        } else {
            let r1 = a * (0.08 + 0.08 * rng.gen::<f64>());
            let r2 = a * (0.08 + 0.08 * rng.gen::<f64>());
            let mut c1 = vec![-0.45 * a];
            let mut c2 = vec![0.45 * a];
            for _ in 1..dim {
                c1.push(0.0);
                c2.push(0.0);
            }
            let t1 = tt * (0.5 + 0.2 * rng.gen::<f64>());
            let t2 = tt * (0.7 + 0.2 * rng.gen::<f64>());
            let a_spec = ShapeSpec::Cylinder {
                center: c1,
                t_end: t1,
                radius: r1,
                duration: 0.25 * t1,
            };
            let b_spec = ShapeSpec::Cylinder {
                center: c2,
                t_end: t2,
                radius: r2,
                duration: 0.2 * t2,
            };
            specs.push((false, a_spec, b_spec));
        }
    }
    let checks: Vec<Result<PairCheck>> = specs
        .par_iter()
        .map(|(nested, first, second)| {
            let m1 = rasterize(first, grid)?;
            let m2 = rasterize(second, grid)?;
            if *nested {
                let small = m1.intersect(&m2);
                let c_small = variational_capacity(&small, p, tol)?.value;
                let c_big = variational_capacity(&m2, p, tol)?.value;
                Ok(PairCheck {
                    nested: true,
                    lhs: c_small,
                    rhs: c_big,
                    ok: c_small <= c_big * (1.0 + slack),
                })
            } else {
                let c1 = variational_capacity(&m1, p, tol)?.value;
                let c2 = variational_capacity(&m2, p, tol)?.value;
                let cu = variational_capacity(&m1.union(&m2), p, tol)?.value;
                let lhs = cu.powf(s);
                let rhs = c1.powf(s) + c2.powf(s);
                Ok(PairCheck {
                    nested: false,
                    lhs,
                    rhs,
                    ok: lhs <= rhs * (1.0 + slack),
                })
            }
        })
        .collect();
    let mut out = Vec::new();
    for c in checks {
        out.push(c?);
    }
    let all_ok = out.iter().all(|c| c.ok);
    Ok(PairSummary {
        checks: out,
        all_ok,
    })
}
