//! Numerical toolkit for parabolic p-capacities on space-time cylinders:
//! variational, energy and measure-data capacities, parabolic Hausdorff
//! content, and checks of the scaling laws and inequalities relating them.

pub mod config;
pub mod elliptic;
pub mod error;
pub mod experiments;
pub mod monster;
pub mod parabolic;
pub mod parhaus;
pub mod report;
pub mod solver;
pub mod stgrid;
pub mod varcap;

pub use error::{Error, Result};
