//! An explicit supercaloric function for p > 2 that blows up on the line
//! x = 0 approaching a chosen time, used to exercise polar-set behaviour.
//! It is a weak solution before the blow-up time, which a discrete weak
//! residual can verify under refinement.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stgrid::{grad_slice, Domain, ScalarField, SpaceTimeGrid};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonsterParams {
    pub amplitude: f64,
    /// blow-up time
    pub tau: f64,
    pub p: f64,
    pub dim: usize,
}

impl MonsterParams {
    pub fn lambda(&self) -> f64 {
        self.dim as f64 * (self.p - 2.0) + self.p
    }

    pub fn validate(&self) -> Result<()> {
        if self.p <= 2.0 {
            return Err(Error::Config(format!(
                "blow-up profile needs p > 2, got {}",
                self.p
            )));
        }
        if self.tau <= 0.0 || self.amplitude <= 0.0 {
            return Err(Error::Config("tau and amplitude must be positive".into()));
        }
        Ok(())
    }
}

/// Evaluate the profile at (x, t), defined for t < tau.
pub fn eval_monster(params: &MonsterParams, x: &[f64], t: f64) -> Result<f64> {
    params.validate()?;
    let MonsterParams {
        amplitude: a,
        tau,
        p,
        dim,
    } = *params;
    if t >= tau {
        return Err(Error::Domain(format!(
            "profile defined for t < tau = {tau}, got t = {t}"
        )));
    }
    let n = dim as f64;
    let lambda = params.lambda();
    let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let first = a * (tau / (tau - t)).powf(n * (p - 2.0) / (lambda * (p - 1.0)));
    let second = ((p - 2.0) / p)
        * lambda.powf(-1.0 / (p - 1.0))
        * (r.powf(p) / (tau - t)).powf(1.0 / (p - 1.0));
    Ok((first + second).powf((p - 1.0) / (p - 2.0)))
}

#[derive(Debug, Clone, Serialize)]
pub struct MonsterResidualReport {
    /// spatial resolutions used
    pub nodes: Vec<usize>,
    /// discrete weak residuals against a fixed interior test function
    pub residuals: Vec<f64>,
    /// log2 contraction rate per halving of h
    pub slope: f64,
}

/// Weak residual iint (-u dphi/dt + |grad u|^{p-2} grad u . grad phi)
/// on (-1,1) x (0.1 tau, 0.8 tau) for a fixed smooth bump phi, evaluated on
/// a ladder of grids. As a weak solution before blow-up the residual must
/// contract under refinement.
pub fn check_monster_residual(params: &MonsterParams, base_nodes: usize) -> Result<MonsterResidualReport> {
    params.validate()?;
    let p = params.p;
    let tau = params.tau;
    let t_lo = 0.1 * tau;
    let t_hi = 0.8 * tau;
    let pi = std::f64::consts::PI;
    let dphi_dt = |x: f64, t: f64| -> f64 {
        if x.abs() >= 0.8 || t <= t_lo || t >= t_hi {
            return 0.0;
        }
        let w = pi / (t_hi - t_lo);
        (pi * x / 1.6).cos().powi(2)
            * 2.0
            * (w * (t - t_lo)).sin()
            * (w * (t - t_lo)).cos()
            * w
    };
    let mut nodes = Vec::new();
    let mut residuals = Vec::new();
    let mut n = base_nodes;
    for _ in 0..3 {
        let dom = Domain::interval(-1.0, 1.0, t_hi, p)?;
        let steps = (n - 1) / 2;
        let grid = SpaceTimeGrid::build(dom, n, steps)?;
        let u = ScalarField::from_fn(grid.clone(), |x, t| {
            eval_monster(params, x, t).unwrap_or(0.0)
        });
        let mut r = 0.0;
        for k in 1..grid.num_levels() {
            let t = grid.time(k);
            let slice = u.level(k);
            let gu = grad_slice(&grid, slice);
            let mut acc = 0.0;
            for c in 0..grid.num_cells() {
                let xc = 0.5 * (grid.axis_coords(0)[c] + grid.axis_coords(0)[c + 1]);
                let g = gu.comps[0][c];
                let gp = grad_phi_x(xc, t, t_lo, t_hi);
                acc += g.abs().powf(p - 2.0) * g * gp * grid.h;
            }
            for i in 0..grid.num_nodes() {
                let x = grid.node_coords(i)[0];
                acc -= slice[i] * dphi_dt(x, t) * grid.h;
            }
            r += acc * grid.dt;
        }
        nodes.push(n);
        residuals.push(r.abs());
        n = 2 * n - 1;
    }
    let slope = (residuals[0] / residuals[2]).log2() / 2.0;
    Ok(MonsterResidualReport {
        nodes,
        residuals,
        slope,
    })
}

fn grad_phi_x(x: f64, t: f64, t_lo: f64, t_hi: f64) -> f64 {
    if x.abs() >= 0.8 || t <= t_lo || t >= t_hi {
        return 0.0;
    }
    let pi = std::f64::consts::PI;
    let c = pi / 1.6;
    -2.0 * (c * x).cos() * (c * x).sin() * c
        * (pi * (t - t_lo) / (t_hi - t_lo)).sin().powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MonsterParams {
        MonsterParams {
            amplitude: 1.0,
            tau: 0.5,
            p: 3.0,
            dim: 1,
        }
    }

    #[test]
    fn rejects_subquadratic_exponent() {
        let mut q = params();
        q.p = 1.8;
        assert!(eval_monster(&q, &[0.1], 0.1).is_err());
    }

    #[test]
    fn rejects_time_at_or_past_tau() {
        assert!(eval_monster(&params(), &[0.1], 0.5).is_err());
        assert!(eval_monster(&params(), &[0.1], 0.7).is_err());
    }

    #[test]
    fn formula_spot_value() {
        // p = 3, n = 1, lambda = 4, A = 1, tau = 1/2, x = 1/2, t = 1/4:
        // first = (2)^{1/8... } computed by hand:
        //   exponent n(p-2)/(lambda(p-1)) = 1/8, first = 2^{1/8}
        //   second = (1/3) 4^{-1/2} ((1/8)/(1/4))^{1/2} = (1/6) sqrt(1/2)
        //   value = (first + second)^2
        let v = eval_monster(&params(), &[0.5], 0.25).unwrap();
        let first = 2.0f64.powf(1.0 / 8.0);
        let second = (1.0 / 6.0) * 0.5f64.sqrt();
        let expect = (first + second).powi(2);
        assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
    }

    #[test]
    fn blows_up_on_ray() {
        let q = params();
        // on the ray x = 0 the value is exactly (tau/(tau-t))^{1/4} here
        for t in [0.4999, 0.499999] {
            let v = eval_monster(&q, &[0.0], t).unwrap();
            let expect = (0.5 / (0.5 - t)).powf(0.25);
            assert!((v - expect).abs() < 1e-10 * expect, "{v} vs {expect}");
        }
        assert!(
            eval_monster(&q, &[0.0], 0.499999).unwrap()
                > 10.0 * eval_monster(&q, &[0.0], 0.25).unwrap()
        );
    }

    #[test]
    fn radial_symmetry_and_monotonicity() {
        let q = params();
        let a = eval_monster(&q, &[0.3], 0.2).unwrap();
        let b = eval_monster(&q, &[-0.3], 0.2).unwrap();
        assert!((a - b).abs() < 1e-14);
        let c = eval_monster(&q, &[0.6], 0.2).unwrap();
        assert!(c > a);
    }

    #[test]
    fn weak_residual_contracts() {
        let r = check_monster_residual(&params(), 65).unwrap();
        assert!(r.slope > 0.5, "slope {} residuals {:?}", r.slope, r.residuals);
    }
}
