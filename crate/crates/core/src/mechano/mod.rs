//! Quasi-static equilibrium of the atrophy-weighted neo-Hookean solid.

mod constitutive;
mod solver;

pub use constitutive::{cauchy_stress, piola_stress, ElementMaterial, Tangent};
pub use solver::{solve_equilibrium, Mechanics, NewtonReport, NewtonSettings, Support};
