//! Evolution of the per-element atrophy factor ϑ.

use rayon::prelude::*;

use crate::params::{BioParams, RegionParams};

/// Smooth atrophy acceleration (Gc/G0)/(1 + exp(−κ(c − c_crit))). Zero in fluid regions.
pub fn gamma(c_tau: f64, region: &RegionParams, bio: &BioParams) -> f64 {
    if !region.tissue.is_tissue() || region.g0 == 0.0 {
        return 0.0;
    }
    (region.gc / region.g0) / (1.0 + (-bio.kappa * (c_tau - bio.c_crit_tau)).exp())
}

/// dϑ/dt for a given acceleration γ.
pub fn theta_rate(theta: f64, gamma: f64, region: &RegionParams, bio: &BioParams) -> f64 {
    (1.0 + gamma) * region.g0 - (bio.k_theta / bio.eta_theta) * (theta - 1.0)
}

/// Explicit update with end-of-step tau, floored at `theta_floor`.
pub fn step_theta(theta: f64, c_tau: f64, dt: f64, region: &RegionParams, bio: &BioParams) -> f64 {
    step_with_gamma(theta, gamma(c_tau, region, bio), dt, region, bio)
}

fn step_with_gamma(theta: f64, gamma: f64, dt: f64, region: &RegionParams, bio: &BioParams) -> f64 {
    if !region.tissue.is_tissue() {
        return 1.0;
    }
    (theta + dt * theta_rate(theta, gamma, region, bio)).clamp(bio.theta_floor, 1.0)
}

/// Advances every element. `c_tau` holds the element-average tau; `None` means healthy ageing
/// (γ = 0). `params[e]` is the region of element `e`.
pub fn advance_theta(theta: &mut [f64], c_tau: Option<&[f64]>, dt: f64, params: &[&RegionParams], bio: &BioParams) {
    theta.par_iter_mut().enumerate().for_each(|(e, t)| {
        let g = c_tau.map_or(0.0, |c| gamma(c[e], params[e], bio));
        *t = step_with_gamma(*t, g, dt, params[e], bio);
    });
}
