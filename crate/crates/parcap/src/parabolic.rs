//! Backward Euler evolution for the parabolic p-Laplace equation, obstacle
//! problems, balayage potentials and their Riesz measures, and the energy
//! functional sup_t (1/2) int v^2 + iint |grad v|^p.

use serde::Serialize;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::solver::{newton_minimize_continued, NewtonOpts, SliceProblem};
use crate::stgrid::{lp_norm_grad, sup_t_l2, ScalarField, SetMask, SpaceTimeGrid};

const EPS_FINAL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub field: ScalarField,
    /// max-norm solver residual per time step, k = 1..M
    pub step_residuals: Vec<f64>,
    /// contact nodes per level (empty when no obstacle), level-major
    pub contact: Vec<bool>,
    /// Riesz weights h^n (u_k - u_{k-1}) + dt grad E_p(u_k), level-major
    pub riesz_weights: Vec<f64>,
}

/// One implicit step: minimize (1/2 dt) int (u - prev)^2 + (1/p) int |grad u|^p
/// subject to zero lateral trace and, if given, u >= obstacle. Active-set
/// outer loop with nonnegative-multiplier check.
fn implicit_step(
    grid: &SpaceTimeGrid,
    prev: &[f64],
    obstacle: Option<&[f64]>,
    p: f64,
    tol: f64,
    u: &mut Vec<f64>,
    contact: &mut [bool],
) -> Result<(f64, Vec<f64>)> {
    let nn = grid.num_nodes();
    let mut active: Vec<bool> = match obstacle {
        Some(psi) => (0..nn)
            .map(|i| psi[i] > 0.0 && u[i] <= psi[i] && !grid.is_lateral_boundary(i))
            .collect(),
        None => vec![false; nn],
    };
    let opts = NewtonOpts {
        tol,
        ..NewtonOpts::default()
    };
    let boundary_fixed: Vec<Option<f64>> = (0..nn)
        .map(|i| {
            if grid.is_lateral_boundary(i) {
                Some(0.0)
            } else {
                None
            }
        })
        .collect();
    let max_sweeps = if obstacle.is_some() { 40 } else { 1 };
    let mut residual = 0.0;
    for _ in 0..max_sweeps {
        let fixed: Vec<Option<f64>> = (0..nn)
            .map(|i| {
                if grid.is_lateral_boundary(i) {
                    Some(0.0)
                } else if active[i] {
                    Some(obstacle.unwrap()[i])
                } else {
                    None
                }
            })
            .collect();
        for i in 0..nn {
            if let Some(v) = fixed[i] {
                u[i] = v;
            }
        }
        let prob = SliceProblem {
            grid,
            p,
            eps: EPS_FINAL,
            alpha: 1.0 / grid.dt,
            anchor: Some(prev),
            rhs: None,
            fixed: &fixed,
        };
        let stats = newton_minimize_continued(&prob, u, EPS_FINAL, &opts)?;
        residual = stats.residual;
        if obstacle.is_none() {
            break;
        }
        let free_prob = SliceProblem {
            grid,
            p,
            eps: EPS_FINAL,
            alpha: 1.0 / grid.dt,
            anchor: Some(prev),
            rhs: None,
            fixed: &boundary_fixed,
        };
        let lambda = free_prob.gradient(u);
        let psi = obstacle.unwrap();
        let mut changed = false;
        for i in 0..nn {
            if grid.is_lateral_boundary(i) {
                continue;
            }
            if active[i] && lambda[i] < -10.0 * tol {
                active[i] = false;
                changed = true;
            } else if !active[i] && u[i] < psi[i] - 10.0 * tol {
                active[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // equation residual weights: h^n du + dt grad E_p, the discrete Riesz mass
    let energy_prob = SliceProblem {
        grid,
        p,
        eps: EPS_FINAL,
        alpha: 0.0,
        anchor: None,
        rhs: None,
        fixed: &vec![None; nn],
    };
    let ge = energy_prob.gradient(u);
    let w = grid.cell_volume();
    let weights: Vec<f64> = (0..nn)
        .map(|i| {
            if grid.is_lateral_boundary(i) {
                0.0
            } else {
                w * (u[i] - prev[i]) + grid.dt * ge[i]
            }
        })
        .collect();
    contact.copy_from_slice(&active);
    Ok((residual, weights))
}

/// Backward Euler evolution from `initial`, optionally constrained to stay
/// above `obstacle` (a level-major field on the same grid).
pub fn evolve(
    grid: &Arc<SpaceTimeGrid>,
    initial: &[f64],
    obstacle: Option<&ScalarField>,
    p: f64,
    tol: f64,
) -> Result<EvolutionResult> {
    let nn = grid.num_nodes();
    if initial.len() != nn {
        return Err(Error::Contract("initial data shape mismatch".into()));
    }
    if let Some(psi) = obstacle {
        if !Arc::ptr_eq(&psi.grid, grid) && psi.data.len() != nn * grid.num_levels() {
            return Err(Error::Contract("obstacle shape mismatch".into()));
        }
    }
    let mut field = ScalarField::zeros(grid.clone());
    field.level_mut(0).copy_from_slice(initial);
    let mut contact = vec![false; nn * grid.num_levels()];
    let mut riesz = vec![0.0; nn * grid.num_levels()];
    let mut residuals = Vec::with_capacity(grid.num_levels() - 1);
    let mut u = initial.to_vec();
    for k in 1..grid.num_levels() {
        let prev = u.clone();
        let psi_k = obstacle.map(|f| f.level(k));
        let mut mask = vec![false; nn];
        let (res, weights) = implicit_step(grid, &prev, psi_k, p, tol, &mut u, &mut mask)?;
        residuals.push(res);
        field.level_mut(k).copy_from_slice(&u);
        contact[k * nn..(k + 1) * nn].copy_from_slice(&mask);
        riesz[k * nn..(k + 1) * nn].copy_from_slice(&weights);
    }
    Ok(EvolutionResult {
        field,
        step_residuals: residuals,
        contact,
        riesz_weights: riesz,
    })
}

/// Mollified indicator of a set mask: 1 on the set, linear decay to 0 over
/// spatial distance `eta`, evaluated per time level.
pub fn mollified_indicator(mask: &SetMask, eta: f64) -> ScalarField {
    let grid = mask.grid.clone();
    let nn = grid.num_nodes();
    let reach = (eta / grid.h).ceil() as i64;
    let mut out = ScalarField::zeros(grid.clone());
    let n = grid.nodes_per_axis as i64;
    for k in 0..grid.num_levels() {
        let slice = &mask.mask[k * nn..(k + 1) * nn];
        let psi = out.level_mut(k);
        for i in 0..nn {
            if slice[i] {
                psi[i] = 1.0;
            }
        }
        for i in 0..nn {
            if !slice[i] {
                continue;
            }
            let mi = grid.node_multi_index(i);
            match grid.dim() {
                1 => {
                    for di in -reach..=reach {
                        let j = mi[0] as i64 + di;
                        if (0..n).contains(&j) {
                            let d = (di.abs() as f64) * grid.h;
                            let v = (1.0 - d / eta).max(0.0);
                            let idx = j as usize;
                            if v > psi[idx] {
                                psi[idx] = v;
                            }
                        }
                    }
                }
                _ => {
                    for dj in -reach..=reach {
                        for di in -reach..=reach {
                            let ji = mi[0] as i64 + di;
                            let jj = mi[1] as i64 + dj;
                            if (0..n).contains(&ji) && (0..n).contains(&jj) {
                                let d = (((di * di + dj * dj) as f64).sqrt()) * grid.h;
                                let v = (1.0 - d / eta).max(0.0);
                                let idx = (jj * n + ji) as usize;
                                if v > psi[idx] {
                                    psi[idx] = v;
                                }
                            }
                        }
                    }
                }
            }
        }
        // never demand values on the lateral boundary
        for i in 0..nn {
            if grid.is_lateral_boundary(i) {
                psi[i] = 0.0;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureDiagnostics {
    pub total_mass: f64,
    /// total magnitude of negative weights clipped to zero
    pub clipped_negative: f64,
    pub max_step_residual: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    pub grid: Arc<SpaceTimeGrid>,
    /// nonnegative weights, level-major
    pub weights: Vec<f64>,
    pub diagnostics: MeasureDiagnostics,
}

impl DiscreteMeasure {
    pub fn mass(&self) -> f64 {
        self.diagnostics.total_mass
    }

    /// fraction of mass on nodes within `dist` (space) and one step (time)
    /// of the given mask
    pub fn mass_fraction_near(&self, mask: &SetMask, dist: f64) -> f64 {
        let grid = &self.grid;
        let nn = grid.num_nodes();
        let mut near = 0.0;
        let mut total = 0.0;
        for k in 0..grid.num_levels() {
            for i in 0..nn {
                let w = self.weights[k * nn + i];
                if w == 0.0 {
                    continue;
                }
                total += w;
                let x = grid.node_coords(i);
                let mut close = false;
                'outer: for dk in -1i64..=1 {
                    let kk = k as i64 + dk;
                    if kk < 0 || kk >= grid.num_levels() as i64 {
                        continue;
                    }
                    let slice = &mask.mask[kk as usize * nn..(kk as usize + 1) * nn];
                    for (j, &m) in slice.iter().enumerate() {
                        if m {
                            let y = grid.node_coords(j);
                            let d: f64 = x
                                .iter()
                                .zip(&y)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>()
                                .sqrt();
                            if d <= dist + 1e-12 {
                                close = true;
                                break 'outer;
                            }
                        }
                    }
                }
                if close {
                    near += w;
                }
            }
        }
        if total > 0.0 {
            near / total
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct BalayageResult {
    pub potential: ScalarField,
    pub measure: DiscreteMeasure,
    pub contact: Vec<bool>,
}

/// Balayage of a compact space-time set: the obstacle-problem solution lying
/// above the mollified indicator (mollification width `eta`, default 2h when
/// passing None), evolved from its own trace at the first level.
pub fn balayage(mask: &SetMask, p: f64, eta: Option<f64>, tol: f64) -> Result<BalayageResult> {
    let grid = mask.grid.clone();
    if mask.is_empty() {
        let zero = ScalarField::zeros(grid.clone());
        return Ok(BalayageResult {
            potential: zero,
            measure: DiscreteMeasure {
                grid: grid.clone(),
                weights: vec![0.0; grid.num_nodes() * grid.num_levels()],
                diagnostics: MeasureDiagnostics {
                    total_mass: 0.0,
                    clipped_negative: 0.0,
                    max_step_residual: 0.0,
                },
            },
            contact: vec![false; grid.num_nodes() * grid.num_levels()],
        });
    }
    let eta = eta.unwrap_or(2.0 * grid.h);
    let psi = mollified_indicator(mask, eta);
    let initial = psi.level(0).to_vec();
    let evo = evolve(&grid, &initial, Some(&psi), p, tol)?;
    let measure = riesz_measure(&evo);
    Ok(BalayageResult {
        potential: evo.field,
        measure,
        contact: evo.contact,
    })
}

/// Riesz measure of an evolution: the nonnegative part of the discrete
/// equation residual, with the clipped magnitude tracked as a diagnostic.
pub fn riesz_measure(evo: &EvolutionResult) -> DiscreteMeasure {
    let grid = evo.field.grid.clone();
    let mut clipped = 0.0;
    let mut mass = 0.0;
    let weights: Vec<f64> = evo
        .riesz_weights
        .iter()
        .map(|&w| {
            if w < 0.0 {
                clipped += -w;
                0.0
            } else {
                mass += w;
                w
            }
        })
        .collect();
    let max_res = evo.step_residuals.iter().cloned().fold(0.0, f64::max);
    DiscreteMeasure {
        grid,
        weights,
        diagnostics: MeasureDiagnostics {
            total_mass: mass,
            clipped_negative: clipped,
            max_step_residual: max_res,
        },
    }
}

/// Measure-data capacity: total Riesz mass of the balayage potential.
pub fn measure_capacity(mask: &SetMask, p: f64, tol: f64) -> Result<(f64, MeasureDiagnostics)> {
    let r = balayage(mask, p, None, tol)?;
    let d = r.measure.diagnostics.clone();
    Ok((d.total_mass, d))
}

/// Energy functional sup_t (1/2) int v^2 + iint |grad v|^p.
pub fn energy_norm(v: &ScalarField, p: f64) -> Result<f64> {
    Ok(0.5 * sup_t_l2(v) + lp_norm_grad(v, p)?)
}

/// Extend a field beyond its final time by solving the equation forward from
/// the terminal slice. Returns the continuation on a fresh grid covering
/// (T, T + extra] with the same spatial layout and step count `steps`.
pub fn extend_by_solution(
    v: &ScalarField,
    p: f64,
    extra: f64,
    steps: usize,
    tol: f64,
) -> Result<EvolutionResult> {
    let base = &v.grid;
    let dom = crate::stgrid::Domain {
        shape: base.domain.shape.clone(),
        total_time: extra,
        exponent: p,
    };
    let grid = SpaceTimeGrid::build(dom, base.nodes_per_axis, steps)?;
    let terminal = v.level(base.num_levels() - 1).to_vec();
    evolve(&grid, &terminal, None, p, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stgrid::{rasterize, Domain, ShapeSpec};

    fn unit_grid(n: usize, m: usize) -> Arc<SpaceTimeGrid> {
        SpaceTimeGrid::build(Domain::interval(0.0, 1.0, 1.0, 2.0).unwrap(), n, m).unwrap()
    }

    #[test]
    fn heat_decay_matches_discrete_eigenvalue() {
        // p=2, u0 = sin(pi x): 3-point Laplacian eigenvalue (4/h^2) sin^2(pi h/2),
        // implicit Euler decays by 1/(1 + dt lam) per step, exactly
        let g = unit_grid(65, 16);
        let pi = std::f64::consts::PI;
        let u0: Vec<f64> = (0..g.num_nodes())
            .map(|i| (pi * g.node_coords(i)[0]).sin())
            .collect();
        let evo = evolve(&g, &u0, None, 2.0, 1e-12).unwrap();
        let lam = 4.0 / (g.h * g.h) * (pi * g.h / 2.0).sin().powi(2);
        let factor = 1.0 / (1.0 + g.dt * lam);
        for k in [1usize, 8, 16] {
            let expect = factor.powi(k as i32);
            let mid = g.node_index(&[32, 0]);
            let got = evo.field.level(k)[mid] / u0[mid];
            assert!(
                (got - expect).abs() < 1e-7,
                "k={k}: decay {got} vs {expect}"
            );
        }
    }

    #[test]
    fn maximum_principle() {
        let g = unit_grid(33, 12);
        let u0: Vec<f64> = (0..g.num_nodes())
            .map(|i| {
                let x = g.node_coords(i)[0];
                if g.is_lateral_boundary(i) {
                    0.0
                } else {
                    (x * 7.0).sin().abs()
                }
            })
            .collect();
        let hi = u0.iter().cloned().fold(0.0f64, f64::max);
        let evo = evolve(&g, &u0, None, 3.0, 1e-9).unwrap();
        for k in 1..g.num_levels() {
            for &v in evo.field.level(k) {
                assert!(v >= -1e-8 && v <= hi + 1e-8);
            }
        }
    }

    #[test]
    fn comparison_principle() {
        let g = unit_grid(33, 8);
        let lo: Vec<f64> = (0..g.num_nodes())
            .map(|i| {
                let x = g.node_coords(i)[0];
                x * (1.0 - x)
            })
            .collect();
        let hi: Vec<f64> = lo.iter().map(|v| v * 2.0).collect();
        let el = evolve(&g, &lo, None, 2.5, 1e-10).unwrap();
        let eh = evolve(&g, &hi, None, 2.5, 1e-10).unwrap();
        for k in 0..g.num_levels() {
            for (a, b) in el.field.level(k).iter().zip(eh.field.level(k)) {
                assert!(a <= &(b + 1e-7));
            }
        }
    }

    #[test]
    fn discrete_energy_dissipation() {
        // 1/2 int u_k^2 - 1/2 int u_{k-1}^2 + dt int |grad u_k|^p <= 0
        let g = unit_grid(33, 10);
        let u0: Vec<f64> = (0..g.num_nodes())
            .map(|i| {
                let x = g.node_coords(i)[0];
                x * (1.0 - x) * 4.0
            })
            .collect();
        let evo = evolve(&g, &u0, None, 3.0, 1e-10).unwrap();
        let w = g.cell_volume();
        for k in 1..g.num_levels() {
            let uk = evo.field.level(k);
            let up = evo.field.level(k - 1);
            let l2k: f64 = uk.iter().map(|v| v * v).sum::<f64>() * w / 2.0;
            let l2p: f64 = up.iter().map(|v| v * v).sum::<f64>() * w / 2.0;
            let diss = g.dt * crate::stgrid::lp_norm_grad_slice(&g, uk, 3.0);
            assert!(l2k - l2p + diss <= 1e-8, "step {k} gained energy");
        }
    }

    #[test]
    fn obstacle_solution_stays_above() {
        let g = unit_grid(33, 8);
        let spec = ShapeSpec::Cylinder {
            center: vec![0.5],
            t_end: 0.8,
            radius: 0.15,
            duration: 0.5,
        };
        let mask = rasterize(&spec, &g).unwrap();
        let r = balayage(&mask, 2.5, None, 1e-9).unwrap();
        let psi = mollified_indicator(&mask, 2.0 * g.h);
        for k in 0..g.num_levels() {
            for (u, o) in r.potential.level(k).iter().zip(psi.level(k)) {
                assert!(u >= &(o - 1e-7), "potential below obstacle");
            }
        }
        // potential reaches 1 on the set, stays in [0, 1]
        let nn = g.num_nodes();
        for (idx, &m) in mask.mask.iter().enumerate() {
            let (k, i) = (idx / nn, idx % nn);
            if m {
                assert!(r.potential.level(k)[i] >= 1.0 - 1e-7);
            }
        }
        for v in &r.potential.data {
            assert!((-1e-7..=1.0 + 1e-7).contains(v));
        }
    }

    #[test]
    fn riesz_mass_positive_and_near_set() {
        let g = unit_grid(49, 12);
        let spec = ShapeSpec::Cylinder {
            center: vec![0.5],
            t_end: 0.75,
            radius: 0.12,
            duration: 0.4,
        };
        let mask = rasterize(&spec, &g).unwrap();
        let r = balayage(&mask, 2.0, None, 1e-10).unwrap();
        assert!(r.measure.mass() > 0.0);
        assert!(r.measure.diagnostics.clipped_negative < 1e-6 * r.measure.mass());
        let frac = r.measure.mass_fraction_near(&mask, 2.5 * g.h);
        assert!(frac > 0.95, "mass fraction near set {frac}");
    }

    #[test]
    fn balayage_monotone_in_set() {
        let g = unit_grid(33, 8);
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
        assert!(small.is_subset_of(&large));
        let rs = balayage(&small, 2.0, None, 1e-10).unwrap();
        let rl = balayage(&large, 2.0, None, 1e-10).unwrap();
        for (a, b) in rs.potential.data.iter().zip(&rl.potential.data) {
            assert!(a <= &(b + 1e-6));
        }
        assert!(rs.measure.mass() <= rl.measure.mass() + 1e-6);
    }

    #[test]
    fn empty_set_zero_capacity() {
        let g = unit_grid(17, 6);
        let mask = SetMask::empty(g);
        let (cap, _) = measure_capacity(&mask, 2.5, 1e-9).unwrap();
        assert_eq!(cap, 0.0);
    }

    #[test]
    fn energy_norm_explicit_field() {
        let g = unit_grid(401, 8);
        let v = ScalarField::from_fn(g, |x, t| (1.0 + t) * x[0] * (1.0 - x[0]));
        // sup term at t=1: (1/2) * 4 int (x - x^2)^2 = 2/30 * 2 = 2/15;
        // grad term: int_0^1 (1+t)^2 dt * int (1-2x)^2 dx = (7/3) * (1/3)
        let got = energy_norm(&v, 2.0).unwrap();
        let expect = 2.0 / 15.0 + 7.0 / 9.0;
        assert!((got - expect).abs() < 0.01 * expect, "{got} vs {expect}");
    }

    #[test]
    fn extension_satisfies_energy_bound() {
        // max{ (1/2) sup_t int v2^2, iint |grad v2|^p } <= (1/2) int v1(T)^2
        let g = unit_grid(33, 8);
        let v1 = ScalarField::from_fn(g.clone(), |x, t| (1.0 + t) * (std::f64::consts::PI * x[0]).sin());
        for p in [2.0, 2.5] {
            let ext = extend_by_solution(&v1, p, 1.0, 8, 1e-10).unwrap();
            let term = v1.level(g.num_levels() - 1);
            let w = g.cell_volume();
            let half_l2: f64 = term.iter().map(|v| v * v).sum::<f64>() * w / 2.0;
            let sup = 0.5 * sup_t_l2(&ext.field);
            let diss = lp_norm_grad(&ext.field, p).unwrap();
            assert!(sup <= half_l2 + 1e-8, "sup {sup} vs {half_l2}");
            assert!(diss <= half_l2 + 1e-8, "dissipation {diss} vs {half_l2}");
        }
    }
}
