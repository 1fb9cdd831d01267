//! Finite element simulation of coupled amyloid-β and tau spreading with atrophy-driven
//! neo-Hookean deformation on labeled tetrahedral brain meshes.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atrophy;
pub mod chemo;
pub mod coupler;
pub mod error;
pub mod fe;
pub mod kinematics;
pub mod mechano;
pub mod meshio;
pub mod params;
pub mod sparse;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
