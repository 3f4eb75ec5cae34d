//! Shared numerical kernels: the regularized p-energy on a slice, a damped
//! Newton minimizer with epsilon continuation, matrix-free CG, and a small
//! L-BFGS driver for the space-time capacity program.
//!
//! All solvers are deterministic and own their scratch memory; independent
//! solves can run in parallel.

use crate::error::{Error, Result};
use crate::stgrid::{grad_slice, CellVectors, SpaceTimeGrid};

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub residual: f64,
}

/// The slice objective
///   F(v) = sum_cells (h^n/p) (|grad v|^2 + eps^2)^{p/2}
///        + (alpha h^n / 2) sum_i (v_i - anchor_i)^2
///        - h^n sum_i rhs_i v_i
/// minimized over the free nodes; `fixed[i] = Some(c)` pins node i to c.
pub struct SliceProblem<'a> {
    pub grid: &'a SpaceTimeGrid,
    pub p: f64,
    pub eps: f64,
    pub alpha: f64,
    pub anchor: Option<&'a [f64]>,
    pub rhs: Option<&'a [f64]>,
    pub fixed: &'a [Option<f64>],
}

impl<'a> SliceProblem<'a> {
    pub fn apply_fixed(&self, v: &mut [f64]) {
        for (i, f) in self.fixed.iter().enumerate() {
            if let Some(c) = f {
                v[i] = *c;
            }
        }
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        let g = grad_slice(self.grid, v);
        let w = self.grid.cell_volume();
        let mut e = 0.0;
        for c in 0..self.grid.num_cells() {
            let m = g.magnitude_sq(c) + self.eps * self.eps;
            e += m.powf(self.p / 2.0) / self.p;
        }
        e *= w;
        if self.alpha != 0.0 {
            let a = self.anchor.expect("alpha set without anchor");
            let q: f64 = v
                .iter()
                .zip(a)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            e += 0.5 * self.alpha * w * q;
        }
        if let Some(r) = self.rhs {
            e -= w * v.iter().zip(r).map(|(x, y)| x * y).sum::<f64>();
        }
        e
    }

    /// Full nodal gradient (free directions only; fixed entries zeroed).
    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let g = grad_slice(self.grid, v);
        let mut weighted = CellVectors::zeros(self.grid.dim(), self.grid.num_cells());
        for c in 0..self.grid.num_cells() {
            let m = g.magnitude_sq(c) + self.eps * self.eps;
            let wc = m.powf((self.p - 2.0) / 2.0);
            for axis in 0..self.grid.dim() {
                weighted.comps[axis][c] = wc * g.comps[axis][c];
            }
        }
        let mut grad = scatter_adjoint(self.grid, &weighted);
        let w = self.grid.cell_volume();
        for x in grad.iter_mut() {
            *x *= w;
        }
        if self.alpha != 0.0 {
            let a = self.anchor.unwrap();
            for i in 0..grad.len() {
                grad[i] += self.alpha * w * (v[i] - a[i]);
            }
        }
        if let Some(r) = self.rhs {
            for i in 0..grad.len() {
                grad[i] -= w * r[i];
            }
        }
        for (i, f) in self.fixed.iter().enumerate() {
            if f.is_some() {
                grad[i] = 0.0;
            }
        }
        grad
    }

    /// Hessian action on a free direction d (fixed entries of d assumed 0).
    fn hess_vec(&self, v_grad: &CellVectors, d: &[f64], out: &mut [f64]) {
        let g = v_grad;
        let gd = grad_slice(self.grid, d);
        let mut weighted = CellVectors::zeros(self.grid.dim(), self.grid.num_cells());
        for c in 0..self.grid.num_cells() {
            let m = g.magnitude_sq(c) + self.eps * self.eps;
            let wc = m.powf((self.p - 2.0) / 2.0);
            let cross = if self.p != 2.0 {
                let dot: f64 = (0..self.grid.dim())
                    .map(|a| g.comps[a][c] * gd.comps[a][c])
                    .sum();
                (self.p - 2.0) * m.powf((self.p - 4.0) / 2.0) * dot
            } else {
                0.0
            };
            for axis in 0..self.grid.dim() {
                weighted.comps[axis][c] = wc * gd.comps[axis][c] + cross * g.comps[axis][c];
            }
        }
        let hv = scatter_adjoint(self.grid, &weighted);
        let w = self.grid.cell_volume();
        for i in 0..out.len() {
            out[i] = hv[i] * w + self.alpha * w * d[i];
        }
        for (i, f) in self.fixed.iter().enumerate() {
            if f.is_some() {
                out[i] = 0.0;
            }
        }
    }

    /// Diagonal estimate of the Hessian, for Jacobi preconditioning.
    fn hess_diag(&self, v_grad: &CellVectors) -> Vec<f64> {
        let grid = self.grid;
        let w = grid.cell_volume();
        let n = grid.nodes_per_axis;
        let h2 = grid.h * grid.h;
        let mut diag = vec![self.alpha * w; grid.num_nodes()];
        let scale = match grid.dim() {
            1 => 1.0 / h2,
            _ => 2.0 / (4.0 * h2),
        };
        match grid.dim() {
            1 => {
                for c in 0..n - 1 {
                    let m = v_grad.magnitude_sq(c) + self.eps * self.eps;
                    let wc = m.powf((self.p - 2.0) / 2.0)
                        * (1.0 + (self.p - 2.0).max(-1.0 + 1e-9));
                    diag[c] += wc * scale * w;
                    diag[c + 1] += wc * scale * w;
                }
            }
            _ => {
                let nc = n - 1;
                for cj in 0..nc {
                    for ci in 0..nc {
                        let c = cj * nc + ci;
                        let m = v_grad.magnitude_sq(c) + self.eps * self.eps;
                        let wc = m.powf((self.p - 2.0) / 2.0);
                        for &node in &[
                            cj * n + ci,
                            cj * n + ci + 1,
                            (cj + 1) * n + ci,
                            (cj + 1) * n + ci + 1,
                        ] {
                            diag[node] += wc * scale * w;
                        }
                    }
                }
            }
        }
        for d in diag.iter_mut() {
            if *d <= 0.0 {
                *d = 1.0;
            }
        }
        diag
    }
}

/// Transpose of the grad stencil: maps cell vectors to nodal values such
/// that out . v = cellvecs . grad v for all v. Equals -div.
pub fn scatter_adjoint(grid: &SpaceTimeGrid, f: &CellVectors) -> Vec<f64> {
    let mut d = crate::stgrid::div_slice(grid, f);
    for x in d.iter_mut() {
        *x = -*x;
    }
    d
}

pub struct NewtonOpts {
    pub tol: f64,
    pub max_newton: usize,
    pub max_cg: usize,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        NewtonOpts {
            tol: 1e-10,
            max_newton: 60,
            max_cg: 2000,
        }
    }
}

/// Damped Newton with Jacobi-preconditioned CG on the slice problem.
/// Terminates when the max-norm of the free gradient drops below tol.
pub fn newton_minimize(
    prob: &SliceProblem,
    v: &mut [f64],
    opts: &NewtonOpts,
) -> Result<SolveStats> {
    prob.apply_fixed(v);
    let mut stats = SolveStats::default();
    let nn = v.len();
    let mut delta = vec![0.0; nn];
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    for it in 0..opts.max_newton {
        let grad = prob.gradient(v);
        let res = grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        stats.residual = res;
        stats.newton_iterations = it;
        if res <= opts.tol {
            return Ok(stats);
        }
        // at the rounding floor the residual stops contracting; accept it
        if res > 0.5 * best {
            stalled += 1;
            if stalled >= 5 {
                return Ok(stats);
            }
        } else {
            stalled = 0;
        }
        best = best.min(res);
        let vg = grad_slice(prob.grid, v);
        if prob.grid.dim() == 1 {
            solve_tridiagonal_newton_step(prob, &vg, &grad, &mut delta);
        } else {
            let diag = prob.hess_diag(&vg);
            let cg_tol = (0.1 * res).max(opts.tol * 0.1);
            let cg_its = cg_solve(
                |d, out| prob.hess_vec(&vg, d, out),
                &grad,
                &diag,
                &mut delta,
                cg_tol,
                opts.max_cg,
            );
            stats.cg_iterations += cg_its;
        }
        // delta solves H delta = grad; step is -delta with backtracking
        let f0 = prob.value(v);
        let slope: f64 = grad.iter().zip(&delta).map(|(g, d)| g * d).sum();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = v
                .iter()
                .zip(&delta)
                .map(|(x, d)| x - step * d)
                .collect();
            let f1 = prob.value(&trial);
            if f1 <= f0 - 1e-4 * step * slope {
                v.copy_from_slice(&trial);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // gradient step fallback
            let gn: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-300);
            let mut step = 1.0 / gn;
            let mut ok = false;
            for _ in 0..60 {
                let trial: Vec<f64> = v
                    .iter()
                    .zip(&grad)
                    .map(|(x, g)| x - step * g)
                    .collect();
                if prob.value(&trial) < f0 {
                    v.copy_from_slice(&trial);
                    ok = true;
                    break;
                }
                step *= 0.5;
            }
            if !ok {
                return Ok(stats); // stationary to rounding
            }
        }
    }
    let grad = prob.gradient(v);
    let res = grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    stats.residual = res;
    stats.newton_iterations = opts.max_newton;
    if res <= opts.tol * 10.0 {
        Ok(stats)
    } else {
        Err(Error::Solver {
            context: "newton slice minimization".into(),
            iterations: opts.max_newton,
            residual: res,
        })
    }
}

/// In one dimension the Hessian is tridiagonal, so the Newton step can be
/// taken exactly: three comb probes of hess_vec recover every entry (the
/// neighbors i-1, i, i+1 have distinct residues mod 3) and the system is
/// eliminated directly. Rows zeroed for fixed nodes become identity rows.
fn solve_tridiagonal_newton_step(
    prob: &SliceProblem,
    vg: &CellVectors,
    grad: &[f64],
    delta: &mut [f64],
) {
    let n = grad.len();
    let mut probes = vec![vec![0.0; n]; 3];
    let mut comb = vec![0.0; n];
    for (r, out) in probes.iter_mut().enumerate() {
        for (i, c) in comb.iter_mut().enumerate() {
            *c = if i % 3 == r { 1.0 } else { 0.0 };
        }
        prob.hess_vec(vg, &comb, out);
    }
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = grad.to_vec();
    for i in 0..n {
        diag[i] = probes[i % 3][i];
        if i > 0 {
            sub[i] = probes[(i - 1) % 3][i];
        }
        if i + 1 < n {
            sup[i] = probes[(i + 1) % 3][i];
        }
        if diag[i] == 0.0 {
            // fixed node: its equation is delta = 0
            diag[i] = 1.0;
            sub[i] = 0.0;
            sup[i] = 0.0;
            rhs[i] = 0.0;
        }
    }
    for i in 1..n {
        let m = sub[i] / diag[i - 1];
        diag[i] -= m * sup[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    delta[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        delta[i] = (rhs[i] - sup[i] * delta[i + 1]) / diag[i];
    }
}

/// Epsilon-continuation wrapper: starts from a gradient-scale epsilon and
/// reduces it geometrically to eps_final, re-solving at each stage.
pub fn newton_minimize_continued(
    prob_base: &SliceProblem,
    v: &mut [f64],
    eps_final: f64,
    opts: &NewtonOpts,
) -> Result<SolveStats> {
    let mut total = SolveStats::default();
    if prob_base.p == 2.0 {
        let prob = SliceProblem {
            eps: 0.0,
            ..*prob_base
        };
        return newton_minimize(&prob, v, opts);
    }
    let g0 = grad_slice(prob_base.grid, v);
    let mut gscale = 0.0f64;
    for c in 0..prob_base.grid.num_cells() {
        gscale = gscale.max(g0.magnitude_sq(c));
    }
    let gscale = gscale.sqrt().max(1.0);
    let mut eps = 1e-2 * gscale;
    loop {
        eps = eps.max(eps_final);
        let prob = SliceProblem { eps, ..*prob_base };
        let stage_tol = if eps > eps_final {
            opts.tol.max(1e-3 * eps)
        } else {
            opts.tol
        };
        let stage = NewtonOpts {
            tol: stage_tol,
            ..*opts
        };
        let s = newton_minimize(&prob, v, &stage)?;
        total.newton_iterations += s.newton_iterations;
        total.cg_iterations += s.cg_iterations;
        total.residual = s.residual;
        if eps <= eps_final {
            return Ok(total);
        }
        eps *= 0.1;
    }
}

/// Jacobi-preconditioned conjugate gradients for H x = b (H SPD on the
/// free subspace). Returns iteration count.
pub fn cg_solve(
    mut hv: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    diag: &[f64],
    x: &mut [f64],
    tol: f64,
    max_it: usize,
) -> usize {
    let n = b.len();
    for xi in x.iter_mut() {
        *xi = 0.0;
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, d)| ri / d).collect();
    let mut pdir = z.clone();
    let mut hp = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for it in 0..max_it {
        let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rmax <= tol || rmax <= 1e-14 * bnorm {
            return it;
        }
        hv(&pdir, &mut hp);
        let php: f64 = pdir.iter().zip(&hp).map(|(a, b)| a * b).sum();
        if php <= 0.0 {
            return it; // direction of zero curvature; bail with current x
        }
        let alpha = rz / php;
        for i in 0..n {
            x[i] += alpha * pdir[i];
            r[i] -= alpha * hp[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            pdir[i] = z[i] + beta * pdir[i];
        }
    }
    max_it
}

/// L-BFGS with Armijo backtracking over a flat DOF vector.
pub struct LbfgsOpts {
    pub max_iterations: usize,
    pub memory: usize,
    /// stop when |f_k - f_{k-1}| <= rel_tol * max(1, |f_k|)
    pub rel_tol: f64,
    pub grad_tol: f64,
}

impl Default for LbfgsOpts {
    fn default() -> Self {
        LbfgsOpts {
            max_iterations: 400,
            memory: 12,
            rel_tol: 1e-9,
            grad_tol: 1e-9,
        }
    }
}

pub struct LbfgsResult {
    pub iterations: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

pub fn lbfgs_minimize(
    mut eval: impl FnMut(&[f64], &mut [f64]) -> f64,
    x: &mut [f64],
    opts: &LbfgsOpts,
) -> LbfgsResult {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut f = eval(x, &mut grad);
    let mut s_list: Vec<Vec<f64>> = Vec::new();
    let mut y_list: Vec<Vec<f64>> = Vec::new();
    let mut rho_list: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..opts.max_iterations {
        iterations = it;
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm <= opts.grad_tol {
            converged = true;
            break;
        }
        // two-loop recursion
        let mut q = grad.clone();
        let m = s_list.len();
        let mut alphas = vec![0.0; m];
        for i in (0..m).rev() {
            let a = rho_list[i]
                * s_list[i].iter().zip(&q).map(|(s, qv)| s * qv).sum::<f64>();
            alphas[i] = a;
            for j in 0..n {
                q[j] -= a * y_list[i][j];
            }
        }
        let gamma = if m > 0 {
            let sy: f64 = s_list[m - 1]
                .iter()
                .zip(&y_list[m - 1])
                .map(|(s, y)| s * y)
                .sum();
            let yy: f64 = y_list[m - 1].iter().map(|y| y * y).sum();
            (sy / yy).max(1e-12)
        } else {
            1.0 / gnorm.max(1.0)
        };
        for qv in q.iter_mut() {
            *qv *= gamma;
        }
        for i in 0..m {
            let b = rho_list[i]
                * y_list[i].iter().zip(&q).map(|(y, qv)| y * qv).sum::<f64>();
            for j in 0..n {
                q[j] += (alphas[i] - b) * s_list[i][j];
            }
        }
        // q is now the ascent direction estimate; step is -q
        let slope: f64 = grad.iter().zip(&q).map(|(g, d)| g * d).sum();
        let (dir, slope) = if slope > 0.0 {
            (q, slope)
        } else {
            (grad.clone(), gnorm * gnorm) // fall back to steepest descent
        };
        let mut step = 1.0;
        let mut new_grad = vec![0.0; n];
        let mut accepted = false;
        let mut f_new = f;
        let mut x_new = x.to_vec();
        for _ in 0..50 {
            for j in 0..n {
                x_new[j] = x[j] - step * dir[j];
            }
            f_new = eval(&x_new, &mut new_grad);
            if f_new <= f - 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true; // no descent to rounding
            break;
        }
        let mut s = vec![0.0; n];
        let mut yv = vec![0.0; n];
        for j in 0..n {
            s[j] = x_new[j] - x[j];
            yv[j] = new_grad[j] - grad[j];
        }
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-14 {
            s_list.push(s);
            y_list.push(yv);
            rho_list.push(1.0 / sy);
            if s_list.len() > opts.memory {
                s_list.remove(0);
                y_list.remove(0);
                rho_list.remove(0);
            }
        }
        let df = (f - f_new).abs();
        x.copy_from_slice(&x_new);
        grad.copy_from_slice(&new_grad);
        f = f_new;
        if df <= opts.rel_tol * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    LbfgsResult {
        iterations,
        value: f,
        grad_norm,
        converged,
    }
}
