//! Space-time discretization: grids, fields, discrete differential
//! operators, norms and rasterization of compact space-time sets.
//!
//! The grid is a uniform tensor product of spatial nodes and time levels.
//! Gradients live on cells (one sample per spatial cell per axis), fluxes
//! share the same staggering, and `div` is defined as the negative adjoint
//! of `grad` so that summation by parts is exact for zero-trace fields.

mod domain;
mod fields;
mod ops;
mod shape;

pub use domain::{Domain, DomainShape, SpaceTimeGrid};
pub use fields::{CellVectors, FluxField, ScalarField, SpatialField};
pub use ops::{
    div_slice, dot_cells, dot_nodes, grad_slice, lp_norm_grad, lp_norm_grad_slice, sup_t_l2,
};
pub use shape::{rasterize, GraphProfile, Provenance, SetMask, ShapeSpec};
