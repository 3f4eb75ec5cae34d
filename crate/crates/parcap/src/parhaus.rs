//! Parabolic metric d_p((x,t),(y,s)) = max(|x-y|, |t-s|^{1/p}), diameters
//! of rasterized sets, and a Hausdorff-type content built from covers by
//! anisotropic boxes (spatial side d/sqrt(n), temporal extent d^p, so each
//! box has d_p-diameter d).

use serde::Serialize;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::stgrid::SetMask;

pub fn dp_dist(x: &[f64], t: f64, y: &[f64], s: f64, p: f64) -> f64 {
    let dx: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    dx.max((t - s).abs().powf(1.0 / p))
}

/// d_p-diameter of a rasterized set. The pairwise max decouples into the
/// spatial diameter of the projection and the time extent to the 1/p.
pub fn dp_diam(mask: &SetMask, p: f64) -> f64 {
    let grid = &mask.grid;
    let nn = grid.num_nodes();
    let mut spatial: Vec<usize> = Vec::new();
    let mut seen = vec![false; nn];
    let mut t_lo = f64::INFINITY;
    let mut t_hi = f64::NEG_INFINITY;
    for k in 0..grid.num_levels() {
        let slice = &mask.mask[k * nn..(k + 1) * nn];
        let mut any = false;
        for (i, &m) in slice.iter().enumerate() {
            if m {
                any = true;
                if !seen[i] {
                    seen[i] = true;
                    spatial.push(i);
                }
            }
        }
        if any {
            let t = grid.time(k);
            t_lo = t_lo.min(t);
            t_hi = t_hi.max(t);
        }
    }
    if spatial.is_empty() {
        return 0.0;
    }
    let mut dx = 0.0f64;
    for (a, &i) in spatial.iter().enumerate() {
        let xi = grid.node_coords(i);
        for &j in &spatial[a + 1..] {
            let xj = grid.node_coords(j);
            let d: f64 = xi
                .iter()
                .zip(&xj)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt();
            dx = dx.max(d);
        }
    }
    dx.max((t_hi - t_lo).powf(1.0 / p))
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverCandidate {
    /// d_p-diameter of the boxes at this rung
    pub scale: f64,
    pub boxes: usize,
    /// boxes * scale^s
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverReport {
    pub exponent: f64,
    pub delta: f64,
    /// the minimizing rung
    pub scale: f64,
    pub boxes: usize,
    pub value: f64,
    pub ladder: Vec<CoverCandidate>,
}

/// Content at exponent s with covers of d_p-diameter at most delta: lattice
/// covers are evaluated on a geometric ladder of scales and the cheapest is
/// reported. Scales below what the grid resolves are rejected.
pub fn hausdorff_content(mask: &SetMask, s: f64, delta: f64, p: f64) -> Result<CoverReport> {
    let grid = &mask.grid;
    if s <= 0.0 {
        return Err(Error::Config(format!("content exponent must be positive, got {s}")));
    }
    if mask.is_empty() {
        return Ok(CoverReport {
            exponent: s,
            delta,
            scale: 0.0,
            boxes: 0,
            value: 0.0,
            ladder: Vec::new(),
        });
    }
    let n = grid.dim() as f64;
    // smallest d whose box strictly contains one grid cell in every direction
    let d_min = (grid.h * n.sqrt()).max(grid.dt.powf(1.0 / p));
    if delta < d_min {
        return Err(Error::Resolution(format!(
            "requested cover scale {delta} below resolvable scale {d_min}"
        )));
    }
    let nn = grid.num_nodes();
    // anchor the lattice at the set's bounding corner so boxes are spent on
    // the set itself rather than on where it happens to sit in the domain
    let mut x_lo = [f64::INFINITY; 2];
    let mut t_lo = f64::INFINITY;
    for k in 0..grid.num_levels() {
        let slice = &mask.mask[k * nn..(k + 1) * nn];
        for (i, &m) in slice.iter().enumerate() {
            if !m {
                continue;
            }
            let x = grid.node_coords(i);
            for (axis, &xi) in x.iter().enumerate() {
                x_lo[axis] = x_lo[axis].min(xi);
            }
            t_lo = t_lo.min(grid.time(k));
        }
    }
    let mut ladder = Vec::new();
    let mut d = d_min;
    while d <= delta * (1.0 + 1e-12) {
        let side = d / n.sqrt();
        let tlen = d.powf(p);
        let mut boxes: HashSet<(i64, i64, i64)> = HashSet::new();
        for k in 0..grid.num_levels() {
            let bt = ((grid.time(k) - t_lo) / tlen).floor() as i64;
            let slice = &mask.mask[k * nn..(k + 1) * nn];
            for (i, &m) in slice.iter().enumerate() {
                if !m {
                    continue;
                }
                let x = grid.node_coords(i);
                let bi = ((x[0] - x_lo[0]) / side).floor() as i64;
                let bj = if grid.dim() == 2 {
                    ((x[1] - x_lo[1]) / side).floor() as i64
                } else {
                    0
                };
                boxes.insert((bi, bj, bt));
            }
        }
        ladder.push(CoverCandidate {
            scale: d,
            boxes: boxes.len(),
            value: boxes.len() as f64 * d.powf(s),
        });
        d *= 1.5;
    }
    let best = ladder
        .iter()
        .cloned()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .unwrap();
    Ok(CoverReport {
        exponent: s,
        delta,
        scale: best.scale,
        boxes: best.boxes,
        value: best.value,
        ladder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stgrid::{rasterize, Domain, ShapeSpec, SpaceTimeGrid};
    use std::sync::Arc;

    fn grid(n: usize, m: usize, p: f64) -> Arc<SpaceTimeGrid> {
        SpaceTimeGrid::build(Domain::interval(-1.0, 1.0, 1.0, p).unwrap(), n, m).unwrap()
    }

    #[test]
    fn metric_axioms_spot_checks() {
        let p = 2.5;
        assert_eq!(dp_dist(&[0.0], 0.0, &[0.0], 0.0, p), 0.0);
        let a = dp_dist(&[0.3], 0.1, &[-0.2], 0.7, p);
        let b = dp_dist(&[-0.2], 0.7, &[0.3], 0.1, p);
        assert_eq!(a, b);
        // triangle inequality on a few triples
        let pts = [([0.1], 0.2), ([-0.4], 0.9), ([0.6], 0.5)];
        for (i, (x, t)) in pts.iter().enumerate() {
            for (j, (y, s)) in pts.iter().enumerate() {
                for (z, r) in pts.iter() {
                    if i == j {
                        continue;
                    }
                    assert!(
                        dp_dist(x, *t, y, *s, p)
                            <= dp_dist(x, *t, z, *r, p) + dp_dist(z, *r, y, *s, p) + 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn diameter_of_cylinder_decouples() {
        let p = 2.0;
        let g = grid(65, 16, p);
        let mask = rasterize(
            &ShapeSpec::Cylinder {
                center: vec![0.0],
                t_end: 0.75,
                radius: 0.4,
                duration: 0.5,
            },
            &g,
        )
        .unwrap();
        let d = dp_diam(&mask, p);
        // spatial diameter 0.8, time extent 0.5^{1/2} ~ 0.707
        assert!((d - 0.8).abs() < 2.0 * g.h, "diam {d}");
    }

    #[test]
    fn diameter_of_slice_is_time_free() {
        let p = 3.0;
        let g = grid(65, 16, p);
        let mask = rasterize(
            &ShapeSpec::Slice {
                center: vec![0.0],
                radius: 0.3,
                time: 0.5,
            },
            &g,
        )
        .unwrap();
        let d = dp_diam(&mask, p);
        assert!((d - 0.6).abs() < 2.0 * g.h, "diam {d}");
    }

    #[test]
    fn content_of_empty_set_is_zero() {
        let g = grid(17, 8, 2.0);
        let mask = SetMask::empty(g);
        let r = hausdorff_content(&mask, 1.0, 0.5, 2.0).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn content_rejects_unresolvable_scale() {
        let g = grid(17, 8, 2.0);
        let mask = rasterize(
            &ShapeSpec::Slice {
                center: vec![0.0],
                radius: 0.3,
                time: 0.5,
            },
            &g,
        )
        .unwrap();
        assert!(hausdorff_content(&mask, 1.0, 1e-4, 2.0).is_err());
    }

    #[test]
    fn content_monotone_in_set_and_exponent() {
        let p = 2.0;
        let g = grid(65, 32, p);
        let small = rasterize(
            &ShapeSpec::Cylinder {
                center: vec![0.0],
                t_end: 0.7,
                radius: 0.2,
                duration: 0.3,
            },
            &g,
        )
        .unwrap();
        let large = rasterize(
            &ShapeSpec::Cylinder {
                center: vec![0.0],
                t_end: 0.9,
                radius: 0.5,
                duration: 0.6,
            },
            &g,
        )
        .unwrap();
        let cs = hausdorff_content(&small, 1.5, 0.9, p).unwrap();
        let cl = hausdorff_content(&large, 1.5, 0.9, p).unwrap();
        assert!(cs.value <= cl.value + 1e-12);
    }

    #[test]
    fn slice_content_scales_like_radius() {
        // content at s = n of a spatial ball slice grows linearly in rho (n = 1)
        let p = 2.0;
        let g = grid(257, 64, p);
        let mut logs = Vec::new();
        for rho in [0.2, 0.4, 0.8] {
            let mask = rasterize(
                &ShapeSpec::Slice {
                    center: vec![0.0],
                    radius: rho,
                    time: 0.5,
                },
                &g,
            )
            .unwrap();
            let r = hausdorff_content(&mask, 1.0, 0.5, p).unwrap();
            logs.push((rho as f64).ln());
            logs.push(r.value.ln());
        }
        // least-squares slope over the three points
        let xs: Vec<f64> = logs.iter().step_by(2).cloned().collect();
        let ys: Vec<f64> = logs.iter().skip(1).step_by(2).cloned().collect();
        let xm = xs.iter().sum::<f64>() / 3.0;
        let ym = ys.iter().sum::<f64>() / 3.0;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
        assert!((slope - 1.0).abs() < 0.2, "slope {slope}");
    }
}
