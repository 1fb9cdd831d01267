//! Material, atrophy and biophysical parameters plus run configuration.

mod config;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meshio::{labels, RegionInfo, RegionSet, TissueClass, VolumeGroup};

pub use config::{load_config, parse_config, Config};

/// Elastic and atrophy parameters of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionParams {
    pub label: u32,
    pub name: String,
    pub tissue: TissueClass,
    pub group: VolumeGroup,
    /// First Lamé parameter (kPa).
    pub lambda: f64,
    /// Shear modulus (kPa).
    pub shear_g: f64,
    /// Healthy ageing atrophy rate (1/year, negative in tissue).
    pub g0: f64,
    /// Accelerated atrophy rate (1/year, non-positive).
    pub gc: f64,
}

impl RegionParams {
    pub fn info(&self) -> RegionInfo {
        RegionInfo {
            label: self.label,
            name: self.name.clone(),
            tissue: self.tissue,
            group: self.group,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let name = &self.name;
        if !(self.lambda > 0.0) {
            return Err(range(
                format!("regions.{name}.lambda"),
                self.lambda,
                f64::MIN_POSITIVE,
                f64::INFINITY,
            ));
        }
        if !(self.shear_g > 0.0) {
            return Err(range(
                format!("regions.{name}.shear_g"),
                self.shear_g,
                f64::MIN_POSITIVE,
                f64::INFINITY,
            ));
        }
        if self.tissue.is_tissue() {
            if self.g0 == 0.0 {
                return Err(Error::Config(format!(
                    "regions.{name}.g0 must be negative in tissue regions (the atrophy acceleration divides by it)"
                )));
            }
            if !(self.g0 < 0.0) {
                return Err(range(format!("regions.{name}.g0"), self.g0, f64::NEG_INFINITY, 0.0));
            }
            if !(self.gc <= 0.0) {
                return Err(range(format!("regions.{name}.gc"), self.gc, f64::NEG_INFINITY, 0.0));
            }
        } else if self.g0 != 0.0 || self.gc != 0.0 {
            return Err(Error::Config(format!("fluid region `{name}` must have g0 = gc = 0")));
        }
        Ok(())
    }
}

fn range(name: String, value: f64, min: f64, max: f64) -> Error {
    Error::OutOfRange { name, value, min, max }
}

/// Table of default regions: (label, name, tissue, group, λ, G, G0, Gc).
#[allow(clippy::type_complexity)]
const DEFAULT_REGIONS: [(u32, &str, TissueClass, VolumeGroup, f64, f64, f64, f64); 12] = {
    use TissueClass::*;
    use VolumeGroup as V;
    [
        (
            labels::VENTRICLES,
            "ventricles",
            Fluid,
            V::Ventricle,
            1.66,
            0.50,
            0.0,
            0.0,
        ),
        (labels::CSF, "csf", Fluid, V::Excluded, 7.22, 14.43, 0.0, 0.0),
        (
            labels::AMYGDALA,
            "amygdala",
            Grey,
            V::Grey,
            32.33,
            1.0,
            -6.0e-3,
            -6.0e-3,
        ),
        (
            labels::HIPPOCAMPUS,
            "hippocampus",
            Grey,
            V::Grey,
            32.33,
            1.0,
            -6.0e-3,
            -6.0e-3,
        ),
        (
            labels::THALAMUS,
            "thalamus",
            Grey,
            V::Grey,
            32.33,
            1.0,
            -6.0e-3,
            -6.0e-3,
        ),
        (
            labels::ENTORHINAL,
            "entorhinal",
            Grey,
            V::Grey,
            32.33,
            1.0,
            -7.0e-3,
            -7.0e-3,
        ),
        (
            labels::CEREBRAL_CORTEX,
            "cerebral_cortex",
            Grey,
            V::Grey,
            32.33,
            1.0,
            -6.0e-3,
            -6.0e-3,
        ),
        (
            labels::CEREBELLUM_CORTEX,
            "cerebellum_cortex",
            Grey,
            V::Grey,
            32.33,
            1.0,
            -6.0e-3,
            -6.0e-3,
        ),
        (
            labels::CEREBELLUM_WM,
            "cerebellum_wm",
            White,
            V::White,
            64.67,
            2.0,
            -5.5e-3,
            -5.5e-3,
        ),
        (
            labels::BRAINSTEM,
            "brainstem",
            White,
            V::White,
            64.67,
            2.0,
            -5.5e-3,
            -5.5e-3,
        ),
        (
            labels::WHITE_MATTER,
            "white_matter",
            White,
            V::White,
            64.67,
            2.0,
            -5.5e-3,
            -5.5e-3,
        ),
        (
            labels::CORPUS_CALLOSUM,
            "corpus_callosum",
            White,
            V::White,
            64.67,
            0.7,
            -5.5e-3,
            -5.5e-3,
        ),
    ]
};

impl RegionParams {
    /// Default parameters of one of the twelve anatomical regions, looked up by name.
    pub fn anatomical(name: &str) -> Option<Self> {
        DEFAULT_REGIONS
            .iter()
            .find(|r| r.1 == name)
            .map(|&(label, name, tissue, group, lambda, shear_g, g0, gc)| RegionParams {
                label,
                name: name.to_string(),
                tissue,
                group,
                lambda,
                shear_g,
                g0,
                gc,
            })
    }

    /// Generic defaults for a user-declared region of the given class.
    pub fn for_class(label: u32, name: &str, tissue: TissueClass) -> Self {
        let template = match tissue {
            TissueClass::Grey => "cerebral_cortex",
            TissueClass::White => "white_matter",
            TissueClass::Fluid => "ventricles",
        };
        RegionParams {
            label,
            name: name.to_string(),
            ..Self::anatomical(template).expect("template region exists")
        }
    }
}

/// The twelve anatomical regions with their default parameters.
pub fn default_regions() -> Vec<RegionParams> {
    DEFAULT_REGIONS
        .iter()
        .map(|r| RegionParams::anatomical(r.1).expect("listed"))
        .collect()
}

pub fn default_region_set() -> RegionSet {
    RegionSet::new(default_regions().iter().map(RegionParams::info).collect()).expect("default labels are unique")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaTauMode {
    /// Rate from the reduced heterodimer kinetics, driven by c̄_Aβ.
    Kinetic,
    /// Tabulated closed form `1.09 (0.4 c̄_tau + 1)^-0.55`.
    TableClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaAbetaMode {
    /// Use `alpha_abeta` as given.
    Direct,
    /// Use ã₁₂ã₀/ã₁ − a₁ from the kinetic rates.
    Derived,
}

/// Global biophysical parameters. Rates in 1/year, diffusivities in mm²/year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BioParams {
    pub d_ext: f64,
    pub d_axn: f64,
    pub c_crit_tau: f64,
    pub kappa: f64,
    pub alpha_abeta: f64,
    pub alpha_abeta_mode: AlphaAbetaMode,
    pub alpha_tau_mode: AlphaTauMode,
    /// Healthy Aβ production ã₀.
    pub a0_tilde: f64,
    /// Healthy Aβ clearance ã₁.
    pub a1_tilde: f64,
    /// Healthy→toxic Aβ conversion ã₁₂.
    pub a12_tilde: f64,
    /// Toxic Aβ clearance a₁.
    pub a1: f64,
    /// Healthy tau production k̃₀.
    pub k0_tilde: f64,
    /// Healthy tau clearance k̃₁.
    pub k1_tilde: f64,
    /// Healthy→toxic tau conversion k̃₁₂.
    pub k12_tilde: f64,
    /// Toxic tau clearance k₁.
    pub k1: f64,
    /// Tau–Aβ coupling k̃₃.
    pub k3_tilde: f64,
    /// Lower bound on the atrophy factor.
    pub theta_floor: f64,
    /// Atrophy relaxation stiffness (0 disables the relaxation term).
    pub k_theta: f64,
    /// Atrophy viscosity.
    pub eta_theta: f64,
}

impl Default for BioParams {
    fn default() -> Self {
        BioParams {
            d_ext: 8.0,
            d_axn: 80.0,
            c_crit_tau: 0.2,
            kappa: 100.0,
            alpha_abeta: 0.2,
            alpha_abeta_mode: AlphaAbetaMode::Direct,
            alpha_tau_mode: AlphaTauMode::Kinetic,
            a0_tilde: 1.04,
            a1_tilde: 1.38,
            a12_tilde: 1.38,
            a1: 0.83,
            k0_tilde: 0.60,
            k1_tilde: 0.55,
            k12_tilde: 1.00,
            k1: 0.55,
            k3_tilde: 2.00,
            theta_floor: 0.05,
            k_theta: 0.0,
            eta_theta: 1.0,
        }
    }
}

impl BioParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(range(format!("bio.{name}"), v, f64::MIN_POSITIVE, f64::INFINITY))
            }
        };
        pos("d_ext", self.d_ext)?;
        if !(self.d_axn >= 0.0 && self.d_axn.is_finite()) {
            return Err(range("bio.d_axn".into(), self.d_axn, 0.0, f64::INFINITY));
        }
        for (name, v) in [
            ("a0_tilde", self.a0_tilde),
            ("a1_tilde", self.a1_tilde),
            ("a12_tilde", self.a12_tilde),
            ("a1", self.a1),
            ("k0_tilde", self.k0_tilde),
            ("k1_tilde", self.k1_tilde),
            ("k12_tilde", self.k12_tilde),
            ("k1", self.k1),
            ("kappa", self.kappa),
            ("eta_theta", self.eta_theta),
        ] {
            pos(name, v)?;
        }
        if !(self.k3_tilde >= 0.0) {
            return Err(range("bio.k3_tilde".into(), self.k3_tilde, 0.0, f64::INFINITY));
        }
        if !(self.k_theta >= 0.0) {
            return Err(range("bio.k_theta".into(), self.k_theta, 0.0, f64::INFINITY));
        }
        if !(self.c_crit_tau > 0.0 && self.c_crit_tau < 1.0) {
            return Err(range("bio.c_crit_tau".into(), self.c_crit_tau, 0.0, 1.0));
        }
        if !(self.theta_floor > 0.0 && self.theta_floor < 1.0) {
            return Err(range("bio.theta_floor".into(), self.theta_floor, 0.0, 1.0));
        }
        match self.alpha_abeta_mode {
            AlphaAbetaMode::Direct => pos("alpha_abeta", self.alpha_abeta)?,
            AlphaAbetaMode::Derived => {
                derive_alpha_abeta(self)?;
            }
        }
        Ok(())
    }

    /// Aβ growth rate in effect for the configured mode.
    pub fn effective_alpha_abeta(&self) -> Result<f64> {
        match self.alpha_abeta_mode {
            AlphaAbetaMode::Direct => Ok(self.alpha_abeta),
            AlphaAbetaMode::Derived => derive_alpha_abeta(self),
        }
    }

    /// Tau growth rate in effect for the configured mode.
    pub fn alpha_tau(&self, c_tau: f64, c_abeta: f64) -> f64 {
        match self.alpha_tau_mode {
            AlphaTauMode::Kinetic => derive_alpha_tau(self, c_abeta),
            AlphaTauMode::TableClosedForm => 1.09 * (0.4 * c_tau + 1.0).powf(-0.55),
        }
    }

    /// Dimensional Aβ solubility limit, reported only.
    pub fn abeta_limit(&self) -> f64 {
        (self.a1_tilde / self.a12_tilde) * (1.0 - self.a1_tilde * self.a1 / (self.a12_tilde * self.a0_tilde))
    }

    /// Dimensional tau solubility limit at a given Aβ concentration, reported only.
    pub fn tau_limit(&self, c_abeta: f64) -> f64 {
        let conv = self.k3_tilde * c_abeta + self.k12_tilde;
        (self.k1_tilde / conv) * (1.0 - self.k1 * self.k1_tilde / (self.k0_tilde * conv))
    }
}

/// Tau growth rate from the reduced heterodimer kinetics; affine in the normalized Aβ level.
pub fn derive_alpha_tau(bio: &BioParams, c_abeta_norm: f64) -> f64 {
    let abeta_saturation =
        (bio.a1_tilde / bio.a12_tilde) * (1.0 - bio.a1_tilde * bio.a1 / (bio.a0_tilde * bio.a12_tilde));
    (bio.k0_tilde / bio.k1_tilde) * (bio.k3_tilde * c_abeta_norm * abeta_saturation + bio.k12_tilde) - bio.k1
}

/// Aβ growth rate ã₁₂ã₀/ã₁ − a₁. A non-positive value means no growth and is rejected.
pub fn derive_alpha_abeta(bio: &BioParams) -> Result<f64> {
    let alpha = bio.a12_tilde * bio.a0_tilde / bio.a1_tilde - bio.a1;
    if alpha > 0.0 {
        Ok(alpha)
    } else {
        Err(Error::Config(format!(
            "non-positive growth rate: derived alpha_abeta = {alpha:e}"
        )))
    }
}

/// Initial normalized concentrations by region name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    #[serde(default)]
    pub tau: BTreeMap<String, f64>,
    #[serde(default)]
    pub abeta: BTreeMap<String, f64>,
}

impl SeedSpec {
    /// Tau 0.4 in the entorhinal cortex, Aβ 0.2 in the cerebral cortex.
    pub fn standard() -> Self {
        SeedSpec {
            tau: BTreeMap::from([("entorhinal".to_string(), 0.4)]),
            abeta: BTreeMap::from([("cerebral_cortex".to_string(), 0.2)]),
        }
    }

    /// Subject-specific seeds of the clinical benchmark (`"C"` or `"D"`).
    pub fn subject(id: &str) -> Option<Self> {
        let map = |v: &[(&str, f64)]| v.iter().map(|(k, x)| (k.to_string(), *x)).collect();
        match id {
            "C" | "c" => Some(SeedSpec {
                tau: map(&[
                    ("entorhinal", 0.51),
                    ("amygdala", 0.70),
                    ("hippocampus", 0.41),
                    ("thalamus", 0.24),
                ]),
                abeta: map(&[
                    ("cerebral_cortex", 0.80),
                    ("brainstem", 0.50),
                    ("cerebellum_cortex", 0.60),
                    ("thalamus", 0.50),
                ]),
            }),
            "D" | "d" => Some(SeedSpec {
                tau: map(&[
                    ("entorhinal", 0.40),
                    ("amygdala", 0.92),
                    ("hippocampus", 0.485),
                    ("thalamus", 0.21),
                ]),
                abeta: map(&[
                    ("cerebral_cortex", 0.40),
                    ("amygdala", 0.30),
                    ("hippocampus", 0.14),
                    ("thalamus", 0.60),
                ]),
            }),
            _ => None,
        }
    }

    pub fn validate(&self, regions: &RegionSet) -> Result<()> {
        for (species, map) in [("tau", &self.tau), ("abeta", &self.abeta)] {
            for (name, &v) in map {
                let Some(r) = regions.by_name(name) else {
                    return Err(Error::Config(format!("seeds.{species}: unknown region `{name}`")));
                };
                if !r.tissue.is_tissue() {
                    return Err(Error::Config(format!("seeds.{species}: region `{name}` is fluid")));
                }
                if !(0.0..1.0).contains(&v) {
                    return Err(range(format!("seeds.{species}.{name}"), v, 0.0, 1.0));
                }
            }
        }
        Ok(())
    }
}

/// Numerical settings of the coupled solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Time step (years).
    pub dt: f64,
    /// Simulated horizon (years).
    pub years: f64,
    /// Snapshot cadence (years); 0 disables snapshots.
    pub snapshot_every: f64,
    /// Solve mechanics every n-th step.
    pub mech_every_n: usize,
    /// Re-run chemistry once with the updated deformation.
    pub corrector_pass: bool,
    /// Relative fixed-point tolerance of the reaction iteration.
    pub chem_tol: f64,
    pub max_chem_iters: usize,
    pub max_dt_halvings: usize,
    /// Allowed overshoot above 1 before a chemistry step is rejected.
    pub overshoot_tol: f64,
    /// Implicit weight of the reaction term (0.5 trapezoidal, 1 implicit Euler).
    pub reaction_theta: f64,
    /// Newton residual reduction relative to the first iterate.
    pub newton_tol: f64,
    /// Absolute Newton residual floor.
    pub newton_abs_tol: f64,
    pub max_newton_iters: usize,
    pub max_line_search_cuts: usize,
    /// Mechanics systems above this size use preconditioned CG instead of a sparse factorization.
    pub direct_solver_max_dofs: usize,
    /// Relative tolerance of iterative linear solves.
    pub linear_tol: f64,
    /// Minimum axonal stretch accepted by the tau diffusion tensor.
    pub lambda_a_min: f64,
    /// Search radius for axonal entries (mm).
    pub axonal_radius: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            dt: 0.05,
            years: 20.0,
            snapshot_every: 2.0,
            mech_every_n: 1,
            corrector_pass: false,
            chem_tol: 1e-8,
            max_chem_iters: 50,
            max_dt_halvings: 10,
            overshoot_tol: 1e-3,
            reaction_theta: 0.5,
            newton_tol: 1e-8,
            newton_abs_tol: 1e-12,
            max_newton_iters: 25,
            max_line_search_cuts: 20,
            direct_solver_max_dofs: 200_000,
            linear_tol: 1e-10,
            lambda_a_min: 1e-9,
            axonal_radius: 5.0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(range(format!("solver.{name}"), v, f64::MIN_POSITIVE, f64::INFINITY))
            }
        };
        pos("dt", self.dt)?;
        pos("chem_tol", self.chem_tol)?;
        pos("overshoot_tol", self.overshoot_tol)?;
        pos("newton_tol", self.newton_tol)?;
        pos("newton_abs_tol", self.newton_abs_tol)?;
        pos("linear_tol", self.linear_tol)?;
        pos("lambda_a_min", self.lambda_a_min)?;
        pos("axonal_radius", self.axonal_radius)?;
        if !(self.years >= 0.0 && self.years.is_finite()) {
            return Err(range("solver.years".into(), self.years, 0.0, f64::INFINITY));
        }
        if !(self.snapshot_every >= 0.0) {
            return Err(range(
                "solver.snapshot_every".into(),
                self.snapshot_every,
                0.0,
                f64::INFINITY,
            ));
        }
        if !(self.reaction_theta >= 0.5 && self.reaction_theta <= 1.0) {
            return Err(range("solver.reaction_theta".into(), self.reaction_theta, 0.5, 1.0));
        }
        for (name, v) in [
            ("mech_every_n", self.mech_every_n),
            ("max_chem_iters", self.max_chem_iters),
            ("max_newton_iters", self.max_newton_iters),
        ] {
            if v == 0 {
                return Err(range(format!("solver.{name}"), 0.0, 1.0, f64::INFINITY));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn table_defaults() {
        let grey = RegionParams::anatomical("cerebral_cortex").unwrap();
        assert_eq!(
            (grey.lambda, grey.shear_g, grey.g0, grey.gc),
            (32.33, 1.0, -6.0e-3, -6.0e-3)
        );
        let ent = RegionParams::anatomical("entorhinal").unwrap();
        assert_eq!(ent.gc, -7.0e-3);
        let cc = RegionParams::anatomical("corpus_callosum").unwrap();
        assert_eq!((cc.lambda, cc.shear_g), (64.67, 0.7));
        let bio = BioParams::default();
        assert_eq!((bio.d_ext, bio.d_axn, bio.c_crit_tau), (8.0, 80.0, 0.2));
        assert_eq!(default_region_set().len(), 12);
        for r in default_regions() {
            r.validate().unwrap();
        }
        bio.validate().unwrap();
    }

    // Expected values come from an independent evaluation of the Table 2 rates:
    // alpha_abeta = 1.38*1.04/1.38 - 0.83 = 0.21
    // alpha_tau(0) = (0.6/0.55)*1.0 - 0.55 = 0.5409090909
    // alpha_tau(1) = (0.6/0.55)*(2*(1 - 0.83/1.04) + 1) - 0.55 = 0.9814685315
    #[test]
    fn growth_rates() {
        let bio = BioParams::default();
        assert_abs_diff_eq!(derive_alpha_abeta(&bio).unwrap(), 0.21, epsilon = 1e-12);
        assert_abs_diff_eq!(derive_alpha_tau(&bio, 0.0), 0.540_909_090_909, epsilon = 1e-11);
        assert_abs_diff_eq!(derive_alpha_tau(&bio, 1.0), 0.981_468_531_469, epsilon = 1e-11);
        assert_eq!(bio.effective_alpha_abeta().unwrap(), 0.2);
        let derived = BioParams {
            alpha_abeta_mode: AlphaAbetaMode::Derived,
            ..bio.clone()
        };
        assert_abs_diff_eq!(derived.effective_alpha_abeta().unwrap(), 0.21, epsilon = 1e-12);
    }

    #[test]
    fn alpha_tau_without_coupling_ignores_abeta() {
        let bio = BioParams {
            k3_tilde: 0.0,
            ..BioParams::default()
        };
        assert_eq!(derive_alpha_tau(&bio, 0.0), derive_alpha_tau(&bio, 0.7));
        let pure = bio.k0_tilde * bio.k12_tilde / bio.k1_tilde - bio.k1;
        assert_abs_diff_eq!(derive_alpha_tau(&bio, 0.0), pure, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_abeta_growth_rejected() {
        let mut bio = BioParams::default();
        bio.a1 = bio.a12_tilde * bio.a0_tilde / bio.a1_tilde;
        let err = derive_alpha_abeta(&bio).unwrap_err();
        assert!(err.to_string().contains("non-positive growth rate"));
    }

    #[test]
    fn closed_form_mode_uses_tau_argument() {
        let bio = BioParams {
            alpha_tau_mode: AlphaTauMode::TableClosedForm,
            ..BioParams::default()
        };
        assert_abs_diff_eq!(bio.alpha_tau(0.0, 0.9), 1.09, epsilon = 1e-15);
        assert_abs_diff_eq!(bio.alpha_tau(1.0, 0.0), 1.09 * 1.4f64.powf(-0.55), epsilon = 1e-15);
    }

    #[test]
    fn seeds_are_range_checked() {
        let regions = default_region_set();
        SeedSpec::standard().validate(&regions).unwrap();
        SeedSpec::subject("C").unwrap().validate(&regions).unwrap();
        SeedSpec::subject("D").unwrap().validate(&regions).unwrap();
        let mut bad = SeedSpec::standard();
        bad.tau.insert("entorhinal".into(), 1.5);
        assert!(matches!(bad.validate(&regions), Err(Error::OutOfRange { .. })));
        let mut unknown = SeedSpec::standard();
        unknown.abeta.insert("nowhere".into(), 0.1);
        assert!(matches!(unknown.validate(&regions), Err(Error::Config(_))));
    }

    #[test]
    fn tissue_needs_negative_g0() {
        let mut r = RegionParams::anatomical("thalamus").unwrap();
        r.g0 = 0.0;
        assert!(r.validate().is_err());
        let mut f = RegionParams::anatomical("ventricles").unwrap();
        f.g0 = -1e-3;
        assert!(f.validate().is_err());
    }
}
