//! Normalized two-species reaction–diffusion on the tissue part of the mesh.
//!
//! Diffusion is evaluated on the reference mesh with spatial tensors pulled back through the
//! current deformation (D₀ = J F⁻¹ d F⁻ᵀ) and a lumped mass weighted by J. Fluid elements carry
//! no degrees of freedom, so their interfaces are natural no-flux boundaries.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fe::{Mat3, TetGeometry, Vec3};
use crate::kinematics::{abeta_diffusion, isotropized_tau_diffusion, pull_back, tau_diffusion_with};
use crate::meshio::{LabeledMesh, RegionSet, TissueClass};
use crate::params::{BioParams, SolverSettings};
use crate::sparse::{for_each_ordered, pcg, CsrMatrix, CsrPattern};

/// α c (1 − c).
pub fn reaction_abeta(c: f64, alpha: f64) -> f64 {
    alpha * c * (1.0 - c)
}

/// α_tau(c̄_Aβ) c (1 − c), with α_tau from the configured mode.
pub fn reaction_tau(c_tau: f64, c_abeta: f64, bio: &BioParams) -> f64 {
    bio.alpha_tau(c_tau, c_abeta) * c_tau * (1.0 - c_tau)
}

/// How white-matter tau diffusion is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauTransport {
    /// Fibre-aligned tensor d_ext i + d_axn (Fa ⊗ Fa)/λa².
    Anisotropic,
    /// Trace-preserving isotropic tensor (d_ext + d_axn/3) i.
    Isotropic,
}

/// Degrees of freedom of the chemical domain (nodes touched by tissue elements).
#[derive(Debug)]
pub struct ChemDomain {
    elements: Vec<usize>,
    geometry: Vec<TetGeometry>,
    dofs: Vec<[usize; 4]>,
    node_dof: Vec<Option<usize>>,
    dof_node: Vec<usize>,
    pattern: Arc<CsrPattern>,
}

impl ChemDomain {
    pub fn new(mesh: &LabeledMesh, regions: &RegionSet) -> Result<Self> {
        let mut elements = Vec::new();
        for (e, &l) in mesh.region_labels().iter().enumerate() {
            let r = regions
                .by_label(l)
                .ok_or_else(|| Error::validation(format!("element label {l} not in region set"), vec![e]))?;
            if r.tissue.is_tissue() {
                elements.push(e);
            }
        }
        let mut node_dof = vec![None; mesh.node_count()];
        let mut dof_node = Vec::new();
        for &e in &elements {
            for &n in &mesh.elements()[e] {
                if node_dof[n].is_none() {
                    node_dof[n] = Some(dof_node.len());
                    dof_node.push(n);
                }
            }
        }
        let dofs: Vec<[usize; 4]> = elements
            .iter()
            .map(|&e| mesh.elements()[e].map(|n| node_dof[n].unwrap()))
            .collect();
        let geometry = elements.iter().map(|&e| mesh.geometry(e)).collect();
        let pattern = Arc::new(CsrPattern::from_cliques(
            dof_node.len(),
            dofs.iter().map(|d| d.as_slice()),
        ));
        Ok(ChemDomain {
            elements,
            geometry,
            dofs,
            node_dof,
            dof_node,
            pattern,
        })
    }

    pub fn dof_count(&self) -> usize {
        self.dof_node.len()
    }

    /// Mesh elements in the domain.
    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn dof_of_node(&self, node: usize) -> Option<usize> {
        self.node_dof[node]
    }

    pub fn node_of_dof(&self, dof: usize) -> usize {
        self.dof_node[dof]
    }

    pub fn gather(&self, nodal: &[f64]) -> Vec<f64> {
        self.dof_node.iter().map(|&n| nodal[n]).collect()
    }

    /// Writes domain values back; nodes outside the domain are set to zero.
    pub fn scatter(&self, values: &[f64], nodal: &mut [f64]) {
        nodal.iter_mut().for_each(|v| *v = 0.0);
        for (d, &n) in self.dof_node.iter().enumerate() {
            nodal[n] = values[d];
        }
    }

    /// Element-average of a nodal field over every mesh element (zero outside the domain).
    pub fn element_average(&self, nodal: &[f64], element_count: usize) -> Vec<f64> {
        let mut out = vec![0.0; element_count];
        for (k, &e) in self.elements.iter().enumerate() {
            out[e] = self.dofs[k].iter().map(|&d| nodal[self.dof_node[d]]).sum::<f64>() / 4.0;
        }
        out
    }
}

/// Lumped mass and per-species stiffness at the current deformation.
#[derive(Debug, Clone)]
pub struct ChemOperators {
    pub mass: Vec<f64>,
    pub stiffness_tau: CsrMatrix,
    pub stiffness_abeta: CsrMatrix,
}

/// Per-element inputs of the transport assembly, indexed by mesh element.
#[derive(Debug, Clone, Copy)]
pub struct ElementData<'a> {
    pub deformation: &'a [Mat3],
    pub directions: &'a [Option<Vec3>],
    pub tissue: &'a [TissueClass],
}

pub fn assemble_chem(
    domain: &ChemDomain,
    mesh: &LabeledMesh,
    data: ElementData<'_>,
    bio: &BioParams,
    transport: TauTransport,
    lambda_a_min: f64,
) -> Result<ChemOperators> {
    let mut mass = vec![0.0; domain.dof_count()];
    let mut stiffness_tau = CsrMatrix::zeros(domain.pattern.clone());
    let mut stiffness_abeta = CsrMatrix::zeros(domain.pattern.clone());
    for_each_ordered(
        domain.elements.len(),
        |k| {
            let e = domain.elements[k];
            let geo = &domain.geometry[k];
            let f = &data.deformation[e];
            let tissue = data.tissue[e];
            let d_tau = match (transport, tissue) {
                (TauTransport::Isotropic, TissueClass::White) => Ok(isotropized_tau_diffusion(bio)),
                _ => tau_diffusion_with(f, data.directions[e], bio, tissue, lambda_a_min),
            };
            let ctx = |err: Error| match err {
                Error::Kinematics(m) => Error::Kinematics(format!("element {}: {m}", mesh.element_ids()[e])),
                other => other,
            };
            let d_tau = pull_back(f, &d_tau.map_err(ctx)?).map_err(ctx)?;
            let d_ab = pull_back(f, &abeta_diffusion(bio)).map_err(ctx)?;
            let m = f.determinant() * geo.volume / 4.0;
            Ok((geo.diffusion_stiffness(&d_tau), geo.diffusion_stiffness(&d_ab), m))
        },
        |k, (kt, ka, m)| {
            let dofs = &domain.dofs[k];
            stiffness_tau.add_local(dofs, &kt);
            stiffness_abeta.add_local(dofs, &ka);
            for &d in dofs {
                mass[d] += m;
            }
        },
    )?;
    Ok(ChemOperators {
        mass,
        stiffness_tau,
        stiffness_abeta,
    })
}

/// Logistic growth rate at a degree of freedom. `s ∈ [0, 1]` is the position within the macro
/// step, so rates driven by another species can be interpolated across sub-steps.
pub trait Reaction: Sync {
    fn alpha(&self, dof: usize, c: f64, s: f64) -> f64;
}

/// Spatially uniform rate.
#[derive(Debug, Clone, Copy)]
pub struct ConstantRate(pub f64);

impl Reaction for ConstantRate {
    fn alpha(&self, _: usize, _: f64, _: f64) -> f64 {
        self.0
    }
}

/// Tau rate driven by Aβ, interpolated linearly between the start and end of the macro step.
pub struct TauRate<'a> {
    pub bio: &'a BioParams,
    pub abeta_start: &'a [f64],
    pub abeta_end: &'a [f64],
}

impl Reaction for TauRate<'_> {
    fn alpha(&self, dof: usize, c: f64, s: f64) -> f64 {
        let a = self.abeta_start[dof] + s * (self.abeta_end[dof] - self.abeta_start[dof]);
        self.bio.alpha_tau(c, a)
    }
}

/// Time-stepping controls, usually taken from [`SolverSettings`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChemSettings {
    pub tol: f64,
    pub max_iters: usize,
    pub max_halvings: usize,
    pub overshoot_tol: f64,
    /// Implicit weight of the reaction term.
    pub theta: f64,
    pub linear_tol: f64,
}

impl From<&SolverSettings> for ChemSettings {
    fn from(s: &SolverSettings) -> Self {
        ChemSettings {
            tol: s.chem_tol,
            max_iters: s.max_chem_iters,
            max_halvings: s.max_dt_halvings,
            overshoot_tol: s.overshoot_tol,
            theta: s.reaction_theta,
            linear_tol: s.linear_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpeciesReport {
    /// Fixed-point iterations summed over sub-steps.
    pub iterations: usize,
    pub substeps: usize,
    /// Lumped mass added by clamping negative values.
    pub clamped_mass: f64,
}

/// Advances one species over `dt`.
///
/// Diffusion is implicit. The reaction uses θ-weighting between the old state and the new one,
/// with the implicit part linearized as α c⁽ᵏ⁺¹⁾ (1 − c⁽ᵏ⁾) and iterated to a relative fixed-point
/// tolerance. Non-converging or overshooting steps are retried as two half steps.
pub fn step_species(
    mass: &[f64],
    stiffness: &CsrMatrix,
    c: &mut [f64],
    dt: f64,
    reaction: &dyn Reaction,
    settings: &ChemSettings,
) -> Result<SpeciesReport> {
    let mut report = SpeciesReport::default();
    let out = advance(mass, stiffness, c, (0.0, 1.0), dt, reaction, settings, 0, &mut report)?;
    c.copy_from_slice(&out);
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn advance(
    mass: &[f64],
    k: &CsrMatrix,
    c_old: &[f64],
    (s0, s1): (f64, f64),
    dt_total: f64,
    reaction: &dyn Reaction,
    settings: &ChemSettings,
    depth: usize,
    report: &mut SpeciesReport,
) -> Result<Vec<f64>> {
    let dt = dt_total * (s1 - s0);
    match try_step(mass, k, c_old, (s0, s1), dt, reaction, settings) {
        Ok((c, iters, clamped)) => {
            report.iterations += iters;
            report.substeps += 1;
            report.clamped_mass += clamped;
            Ok(c)
        }
        Err(e) if depth < settings.max_halvings => {
            log::debug!("chemistry step of {dt:e} yr rejected ({e}); halving");
            let mid = 0.5 * (s0 + s1);
            let half = advance(
                mass,
                k,
                c_old,
                (s0, mid),
                dt_total,
                reaction,
                settings,
                depth + 1,
                report,
            )?;
            advance(
                mass,
                k,
                &half,
                (mid, s1),
                dt_total,
                reaction,
                settings,
                depth + 1,
                report,
            )
        }
        Err(e) => Err(Error::Solver(format!(
            "chemistry step failed after {} halvings: {e}",
            settings.max_halvings
        ))),
    }
}

fn try_step(
    mass: &[f64],
    k: &CsrMatrix,
    c_old: &[f64],
    (s0, s1): (f64, f64),
    dt: f64,
    reaction: &dyn Reaction,
    settings: &ChemSettings,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = c_old.len();
    let theta = settings.theta;
    let base: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = c_old[i];
            mass[i] * (c / dt + (1.0 - theta) * reaction.alpha(i, c, s0) * c * (1.0 - c))
        })
        .collect();
    let diag_index: Vec<usize> = (0..n).map(|i| k.pattern().index(i, i).unwrap()).collect();

    let mut ck = c_old.to_vec();
    let mut a = k.clone();
    let mut rhs = vec![0.0; n];
    for iter in 1..=settings.max_iters {
        a.values.copy_from_slice(&k.values);
        for i in 0..n {
            let c = ck[i];
            let growth = theta * reaction.alpha(i, c, s1) * (1.0 - c);
            let shift = mass[i] / dt - mass[i] * growth;
            if shift > 0.0 {
                a.values[diag_index[i]] += shift;
                rhs[i] = base[i];
            } else {
                a.values[diag_index[i]] += mass[i] / dt;
                rhs[i] = base[i] + mass[i] * growth * c;
            }
        }
        let mut next = ck.clone();
        pcg(&a, &rhs, &mut next, settings.linear_tol, 10 * n.max(100))?;
        let diff = next.iter().zip(&ck).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let scale = next.iter().map(|x| x.abs()).fold(0.0, f64::max);
        ck = next;
        if diff <= settings.tol * scale || scale == 0.0 {
            let mut clamped = 0.0;
            let mut max = 0.0f64;
            for (i, v) in ck.iter_mut().enumerate() {
                if *v < 0.0 {
                    clamped -= mass[i] * *v;
                    *v = 0.0;
                }
                max = max.max(*v);
            }
            if clamped > 0.0 {
                log::debug!("clamped negative concentrations; lumped mass change {clamped:e}");
            }
            if max > 1.0 + settings.overshoot_tol {
                return Err(Error::Solver(format!("concentration overshoot {max:.6} above 1")));
            }
            return Ok((ck, iter, clamped));
        }
    }
    Err(Error::Solver(format!(
        "reaction fixed point did not converge in {} iterations",
        settings.max_iters
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshio::synthetic::BoxGrid;
    use crate::meshio::{FaceLabel, RegionInfo, VolumeGroup};
    use crate::params::default_region_set;
    use approx::assert_abs_diff_eq;

    fn settings() -> ChemSettings {
        (&SolverSettings::default()).into()
    }

    #[test]
    fn reaction_examples() {
        assert_eq!(reaction_abeta(0.0, 0.2), 0.0);
        assert_eq!(reaction_abeta(1.0, 0.2), 0.0);
        assert_abs_diff_eq!(reaction_abeta(0.5, 0.2), 0.05, epsilon = 1e-15);
        let bio = BioParams::default();
        // 0.5409090909 * 0.24 and 0.9814685315 * 0.24
        assert_abs_diff_eq!(reaction_tau(0.4, 0.0, &bio), 0.129_818_181_818, epsilon = 1e-11);
        assert_abs_diff_eq!(reaction_tau(0.4, 1.0, &bio), 0.235_552_447_552, epsilon = 1e-11);
        assert_eq!(reaction_tau(0.0, 0.5, &bio), 0.0);
        assert_eq!(reaction_tau(1.0, 0.5, &bio), 0.0);
    }

    #[test]
    fn single_tet_stiffness() {
        let mesh = LabeledMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
            vec![[0, 1, 2, 3]],
            vec![7],
            vec![],
        )
        .unwrap();
        let regions = default_region_set();
        let domain = ChemDomain::new(&mesh, &regions).unwrap();
        let ops = assemble_chem(
            &domain,
            &mesh,
            ElementData {
                deformation: &[Mat3::identity()],
                directions: &[None],
                tissue: &[TissueClass::Grey],
            },
            &BioParams::default(),
            TauTransport::Anisotropic,
            1e-9,
        )
        .unwrap();
        // Reference simplex Laplacian: V = 1/6, grads (-1,-1,-1), e1, e2, e3.
        let expected = [
            [3.0, -1.0, -1.0, -1.0],
            [-1.0, 1.0, 0.0, 0.0],
            [-1.0, 0.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0, 1.0],
        ];
        for a in 0..4 {
            for b in 0..4 {
                let (da, db) = (domain.dof_of_node(a).unwrap(), domain.dof_of_node(b).unwrap());
                assert_abs_diff_eq!(
                    ops.stiffness_abeta.get(da, db),
                    8.0 * expected[a][b] / 6.0,
                    epsilon = 1e-14
                );
            }
        }
        assert_abs_diff_eq!(ops.mass.iter().sum::<f64>(), 1.0 / 6.0, epsilon = 1e-15);
    }

    fn cube(n: usize, label: impl Fn(Vec3) -> u32) -> LabeledMesh {
        BoxGrid::new(Vec3::zeros(), Vec3::repeat(1.0), [n, n, n])
            .build(label, Some(FaceLabel::Free), &[1, 2])
            .unwrap()
    }

    #[test]
    fn fluid_nodes_excluded() {
        let mesh = cube(4, |c| if c.x > 0.5 { 1 } else { 7 });
        let regions = default_region_set();
        let domain = ChemDomain::new(&mesh, &regions).unwrap();
        let fluid_only = mesh.nodes().iter().filter(|p| p.x > 0.6).count();
        assert_eq!(domain.dof_count(), mesh.node_count() - fluid_only);
        for (i, p) in mesh.nodes().iter().enumerate() {
            assert_eq!(domain.dof_of_node(i).is_some(), p.x < 0.6);
        }
    }

    fn operators(mesh: &LabeledMesh, regions: &RegionSet) -> (ChemDomain, ChemOperators) {
        let domain = ChemDomain::new(mesh, regions).unwrap();
        let ne = mesh.element_count();
        let ops = assemble_chem(
            &domain,
            mesh,
            ElementData {
                deformation: &vec![Mat3::identity(); ne],
                directions: &vec![None; ne],
                tissue: &vec![TissueClass::Grey; ne],
            },
            &BioParams::default(),
            TauTransport::Anisotropic,
            1e-9,
        )
        .unwrap();
        (domain, ops)
    }

    #[test]
    fn uniform_field_is_steady() {
        let mesh = cube(3, |_| 7);
        let (domain, ops) = operators(&mesh, &default_region_set());
        for i in 0..domain.dof_count() {
            assert!(ops.stiffness_tau.row_sum(i).abs() < 1e-12);
        }
        let mut c = vec![0.3; domain.dof_count()];
        step_species(
            &ops.mass,
            &ops.stiffness_abeta,
            &mut c,
            0.05,
            &ConstantRate(0.0),
            &settings(),
        )
        .unwrap();
        for v in c {
            assert_abs_diff_eq!(v, 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_logistic_trapezoid() {
        let mesh = cube(2, |_| 7);
        let (domain, ops) = operators(&mesh, &default_region_set());
        let mut c = vec![0.2; domain.dof_count()];
        for _ in 0..200 {
            step_species(
                &ops.mass,
                &ops.stiffness_abeta,
                &mut c,
                0.05,
                &ConstantRate(0.2),
                &settings(),
            )
            .unwrap();
        }
        // Closed form 0.2 e² / (1 + 0.2 (e² − 1)) = 0.648785576...
        for v in c {
            assert_abs_diff_eq!(v, 0.648_785_576, epsilon = 1e-5);
        }
    }

    #[test]
    fn overshoot_triggers_halving() {
        let mesh = cube(1, |_| 7);
        let (domain, ops) = operators(&mesh, &default_region_set());
        let mut c = vec![0.9; domain.dof_count()];
        let report = step_species(
            &ops.mass,
            &ops.stiffness_abeta,
            &mut c,
            40.0,
            &ConstantRate(5.0),
            &settings(),
        );
        let report = report.unwrap();
        assert!(report.substeps > 1);
        assert!(c.iter().all(|&v| v <= 1.0 + 1e-3));
    }

    #[test]
    fn custom_fluid_region() {
        let regions = RegionSet::new(vec![
            RegionInfo {
                label: 1,
                name: "pool".into(),
                tissue: TissueClass::Fluid,
                group: VolumeGroup::Ventricle,
            },
            RegionInfo {
                label: 2,
                name: "tissue".into(),
                tissue: TissueClass::Grey,
                group: VolumeGroup::Grey,
            },
        ])
        .unwrap();
        let mesh = cube(2, |c| if c.z > 0.5 { 1 } else { 2 });
        let domain = ChemDomain::new(&mesh, &regions).unwrap();
        assert_eq!(domain.elements().len(), mesh.element_count() / 2);
    }
}
