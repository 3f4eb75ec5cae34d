//! Declarative specs for the compact sets whose capacity is measured, and
//! their rasterization to node masks.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::stgrid::SpaceTimeGrid;

/// Parametric height profile for graph sets, with h = t0 on the sphere
/// |x - x0| = rho and maximum elevation `amp` at the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GraphProfile {
    /// h(x) = t0 + amp * (1 - |x-x0|/rho)
    Cone { amp: f64 },
    /// h(x) = t0 + amp * cos^2(pi |x-x0| / (2 rho))
    Bump { amp: f64 },
}

impl GraphProfile {
    pub fn height(&self, t0: f64, rho: f64, r: f64) -> f64 {
        let s = (r / rho).min(1.0);
        match self {
            GraphProfile::Cone { amp } => t0 + amp * (1.0 - s),
            GraphProfile::Bump { amp } => {
                let c = (std::f64::consts::FRAC_PI_2 * s).cos();
                t0 + amp * c * c
            }
        }
    }

    pub fn amp(&self) -> f64 {
        match self {
            GraphProfile::Cone { amp } | GraphProfile::Bump { amp } => *amp,
        }
    }
}

/// Geometric description of a compact subset of the space-time cylinder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ShapeSpec {
    /// Closed cylinder B_rho(x0) x [t0 - tau, t0]. A duration of 0 is legal
    /// and produces a slice mask.
    Cylinder {
        center: Vec<f64>,
        t_end: f64,
        radius: f64,
        duration: f64,
    },
    /// Closed ball B_rho(x0) at a single time instant.
    Slice {
        center: Vec<f64>,
        radius: f64,
        time: f64,
    },
    /// Graph {(x, h(x)) : |x - x0| <= rho} with h = t0 on the sphere.
    Graph {
        center: Vec<f64>,
        radius: f64,
        base_time: f64,
        profile: GraphProfile,
    },
    Union(Vec<ShapeSpec>),
}

impl ShapeSpec {
    pub fn cylinder(center: Vec<f64>, t_end: f64, radius: f64, duration: f64) -> Self {
        ShapeSpec::Cylinder {
            center,
            t_end,
            radius,
            duration,
        }
    }

    pub fn slice(center: Vec<f64>, radius: f64, time: f64) -> Self {
        ShapeSpec::Slice {
            center,
            radius,
            time,
        }
    }

    fn validate(&self, grid: &SpaceTimeGrid) -> Result<()> {
        let big_t = grid.domain.total_time;
        match self {
            ShapeSpec::Cylinder {
                center,
                t_end,
                radius,
                duration,
            } => {
                check_spatial(grid, center, *radius)?;
                if *radius <= 0.0 || *duration < 0.0 {
                    return Err(Error::Geometry(format!(
                        "cylinder needs rho > 0, tau >= 0 (got rho={radius}, tau={duration})"
                    )));
                }
                if *t_end - *duration < -1e-12 || *t_end > big_t + 1e-12 {
                    return Err(Error::Geometry(format!(
                        "cylinder time span [{}, {}] exceeds (0, {big_t})",
                        t_end - duration,
                        t_end
                    )));
                }
                Ok(())
            }
            ShapeSpec::Slice {
                center,
                radius,
                time,
            } => {
                check_spatial(grid, center, *radius)?;
                if *time < -1e-12 || *time > big_t + 1e-12 {
                    return Err(Error::Geometry(format!(
                        "slice instant {time} outside [0, {big_t}]"
                    )));
                }
                Ok(())
            }
            ShapeSpec::Graph {
                center,
                radius,
                base_time,
                profile,
            } => {
                check_spatial(grid, center, *radius)?;
                let top = base_time + profile.amp().max(0.0);
                if *base_time < -1e-12 || top > big_t + 1e-12 || profile.amp() < 0.0 {
                    return Err(Error::Geometry(format!(
                        "graph time range [{base_time}, {top}] exceeds (0, {big_t})"
                    )));
                }
                Ok(())
            }
            ShapeSpec::Union(parts) => {
                if parts.is_empty() {
                    return Err(Error::Geometry("empty union spec".into()));
                }
                for p in parts {
                    p.validate(grid)?;
                }
                Ok(())
            }
        }
    }
}

fn check_spatial(grid: &SpaceTimeGrid, center: &[f64], radius: f64) -> Result<()> {
    if center.len() != grid.dim() {
        return Err(Error::Geometry(format!(
            "shape center has dimension {}, grid has {}",
            center.len(),
            grid.dim()
        )));
    }
    // margin of one cell to the lateral boundary
    let d = grid.domain.dist_to_boundary(center);
    if d < radius + grid.h * (1.0 - 1e-12) {
        return Err(Error::Geometry(format!(
            "ball of radius {radius} at {center:?} does not fit inside Omega with margin h"
        )));
    }
    Ok(())
}

/// Rasterization record: what the mask was built from, including any time
/// snapping applied on the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Cylinder {
        spec: ShapeSpec,
        /// inclusive level range [k_start, k_end] after snapping
        levels: (usize, usize),
        snapped_duration: f64,
    },
    Slice {
        spec: ShapeSpec,
        level: usize,
        snapped_time: f64,
    },
    Graph {
        spec: ShapeSpec,
    },
    Union(Vec<Provenance>),
    Raw,
}

/// Boolean node indicator of a compact subset of the cylinder.
#[derive(Debug, Clone)]
pub struct SetMask {
    pub grid: Arc<SpaceTimeGrid>,
    /// Level-major: mask[level * num_nodes + node].
    pub mask: Vec<bool>,
    pub provenance: Provenance,
}

impl SetMask {
    pub fn empty(grid: Arc<SpaceTimeGrid>) -> Self {
        let len = grid.num_levels() * grid.num_nodes();
        SetMask {
            grid,
            mask: vec![false; len],
            provenance: Provenance::Raw,
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, level: usize, node: usize) -> bool {
        self.mask[level * self.grid.num_nodes() + node]
    }

    pub fn is_subset_of(&self, other: &SetMask) -> bool {
        self.mask
            .iter()
            .zip(&other.mask)
            .all(|(&a, &b)| !a || b)
    }

    /// Nodewise OR; provenance records the union.
    pub fn intersect(&self, other: &SetMask) -> SetMask {
        let mask = self
            .mask
            .iter()
            .zip(&other.mask)
            .map(|(&a, &b)| a && b)
            .collect();
        SetMask {
            grid: self.grid.clone(),
            mask,
            provenance: Provenance::Union(vec![
                self.provenance.clone(),
                other.provenance.clone(),
            ]),
        }
    }

    pub fn union(&self, other: &SetMask) -> SetMask {
        let mask = self
            .mask
            .iter()
            .zip(&other.mask)
            .map(|(&a, &b)| a || b)
            .collect();
        SetMask {
            grid: self.grid.clone(),
            mask,
            provenance: Provenance::Union(vec![
                self.provenance.clone(),
                other.provenance.clone(),
            ]),
        }
    }

    /// (n+1)-dimensional volume estimate: node count times h^n * dt.
    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume() * self.grid.dt
    }

    /// Inclusive level range of the marked nodes, if any.
    pub fn level_range(&self) -> Option<(usize, usize)> {
        let nn = self.grid.num_nodes();
        let mut lo = None;
        let mut hi = None;
        for k in 0..self.grid.num_levels() {
            if self.mask[k * nn..(k + 1) * nn].iter().any(|&b| b) {
                if lo.is_none() {
                    lo = Some(k);
                }
                hi = Some(k);
            }
        }
        lo.zip(hi)
    }
}

/// Mark exactly the grid nodes inside the closed set described by the spec.
/// Time instants off the lattice snap to the nearest level (recorded in the
/// provenance).
pub fn rasterize(shape: &ShapeSpec, grid: &Arc<SpaceTimeGrid>) -> Result<SetMask> {
    shape.validate(grid)?;
    let nn = grid.num_nodes();
    let nl = grid.num_levels();
    let mut mask = vec![false; nl * nn];
    let provenance = rasterize_into(shape, grid, &mut mask)?;
    Ok(SetMask {
        grid: grid.clone(),
        mask,
        provenance,
    })
}

fn rasterize_into(
    shape: &ShapeSpec,
    grid: &Arc<SpaceTimeGrid>,
    mask: &mut [bool],
) -> Result<Provenance> {
    let nn = grid.num_nodes();
    match shape {
        ShapeSpec::Cylinder {
            center,
            t_end,
            radius,
            duration,
        } => {
            let k1 = grid.nearest_level(*t_end);
            let k0 = grid.nearest_level(*t_end - *duration);
            for k in k0..=k1 {
                mark_ball(grid, center, *radius, &mut mask[k * nn..(k + 1) * nn]);
            }
            Ok(Provenance::Cylinder {
                spec: shape.clone(),
                levels: (k0, k1),
                snapped_duration: (k1 - k0) as f64 * grid.dt,
            })
        }
        ShapeSpec::Slice {
            center,
            radius,
            time,
        } => {
            let k = grid.nearest_level(*time);
            mark_ball(grid, center, *radius, &mut mask[k * nn..(k + 1) * nn]);
            Ok(Provenance::Slice {
                spec: shape.clone(),
                level: k,
                snapped_time: grid.time(k),
            })
        }
        ShapeSpec::Graph {
            center,
            radius,
            base_time,
            profile,
        } => {
            for node in 0..nn {
                let x = grid.node_coords(node);
                let r = dist(&x, center);
                if r <= radius + 1e-12 {
                    let k = grid.nearest_level(profile.height(*base_time, *radius, r));
                    mask[k * nn + node] = true;
                }
            }
            Ok(Provenance::Graph { spec: shape.clone() })
        }
        ShapeSpec::Union(parts) => {
            let mut provs = Vec::with_capacity(parts.len());
            for p in parts {
                provs.push(rasterize_into(p, grid, mask)?);
            }
            Ok(Provenance::Union(provs))
        }
    }
}

fn mark_ball(grid: &SpaceTimeGrid, center: &[f64], radius: f64, slice: &mut [bool]) {
    for (node, m) in slice.iter_mut().enumerate() {
        let x = grid.node_coords(node);
        if dist(&x, center) <= radius + 1e-12 {
            *m = true;
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
