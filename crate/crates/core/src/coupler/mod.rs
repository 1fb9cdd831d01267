//! Staggered time loop coupling protein transport, atrophy and mechanics.

mod observables;
mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::atrophy::advance_theta;
use crate::chemo::{
    assemble_chem, step_species, ChemDomain, ChemOperators, ChemSettings, ConstantRate, ElementData, SpeciesReport,
    TauRate, TauTransport,
};
use crate::error::{Error, Result};
use crate::fe::{Mat3, Vec3};
use crate::kinematics::element_direction;
use crate::mechano::{Mechanics, NewtonReport, NewtonSettings, Support};
use crate::meshio::{AxonalField, LabeledMesh, Snapshot, TissueClass};
use crate::params::{Config, RegionParams};

pub use observables::{compute_observables, reference_volume, ObservableLayout, ObservableRow};
pub use run::{run, snapshot_name, RunOutcome};

/// Simulation scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Aβ and tau kinetics with fibre-aligned tau transport.
    Ad,
    /// Ageing only: no protein kinetics.
    Healthy,
    /// As `Ad` but with trace-preserving isotropic tau transport in white matter.
    AdIsotropic,
}

impl Mode {
    pub fn has_chemistry(self) -> bool {
        self != Mode::Healthy
    }

    fn transport(self) -> TauTransport {
        match self {
            Mode::AdIsotropic => TauTransport::Isotropic,
            _ => TauTransport::Anisotropic,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ad => "ad",
            Mode::Healthy => "healthy",
            Mode::AdIsotropic => "ad_isotropic",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ad" => Ok(Mode::Ad),
            "healthy" => Ok(Mode::Healthy),
            "ad_isotropic" => Ok(Mode::AdIsotropic),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Fields at one instant. Concentrations and displacement are nodal, ϑ and F per element.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub c_tau: Vec<f64>,
    pub c_abeta: Vec<f64>,
    pub theta: Vec<f64>,
    pub displacement: Vec<Vec3>,
    pub deformation: Vec<Mat3>,
}

impl SimState {
    /// Healthy undeformed state with zero concentrations.
    pub fn undeformed(mesh: &LabeledMesh) -> Self {
        SimState {
            time: 0.0,
            c_tau: vec![0.0; mesh.node_count()],
            c_abeta: vec![0.0; mesh.node_count()],
            theta: vec![1.0; mesh.element_count()],
            displacement: vec![Vec3::zeros(); mesh.node_count()],
            deformation: vec![Mat3::identity(); mesh.element_count()],
        }
    }

    /// Rebuilds a state from a snapshot written for `mesh`.
    pub fn from_snapshot(snap: &Snapshot, mesh: &LabeledMesh) -> Result<Self> {
        let n = mesh.node_count();
        let ne = mesh.element_count();
        if snap.points.len() != n || snap.cells.len() != ne || snap.cells != mesh.elements() {
            return Err(Error::validation("snapshot does not match the mesh", vec![]));
        }
        let point = |name: &str| {
            snap.point_scalars
                .get(name)
                .filter(|v| v.len() == n)
                .cloned()
                .ok_or_else(|| Error::validation(format!("snapshot lacks point field `{name}`"), vec![]))
        };
        let displacement = snap
            .point_vectors
            .get("u")
            .filter(|v| v.len() == n)
            .cloned()
            .ok_or_else(|| Error::validation("snapshot lacks displacement vectors `u`", vec![]))?;
        let theta = snap
            .cell_scalars
            .get("theta")
            .filter(|v| v.len() == ne)
            .cloned()
            .ok_or_else(|| Error::validation("snapshot lacks cell field `theta`", vec![]))?;
        let deformation = (0..ne)
            .map(|e| {
                mesh.geometry(e)
                    .deformation_gradient(&mesh.elements()[e].map(|v| displacement[v]))
            })
            .collect();
        Ok(SimState {
            time: snap.time,
            c_tau: point("c_tau")?,
            c_abeta: point("c_abeta")?,
            theta,
            displacement,
            deformation,
        })
    }
}

/// Diagnostics of one time step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub abeta: SpeciesReport,
    pub tau: SpeciesReport,
    pub newton: Option<NewtonReport>,
}

/// Mesh-bound simulation: per-element parameters, operators and the current state.
pub struct Simulation<'a> {
    mesh: &'a LabeledMesh,
    config: &'a Config,
    mode: Mode,
    region_of: Vec<usize>,
    tissue: Vec<TissueClass>,
    fibres: Vec<Option<Vec3>>,
    domain: ChemDomain,
    ops: Option<ChemOperators>,
    mechanics: Mechanics,
    chem: ChemSettings,
    newton: NewtonSettings,
    alpha_abeta: f64,
    state: SimState,
}

impl<'a> Simulation<'a> {
    /// Seeded initial state. `axonal` is needed for white matter in [`Mode::Ad`]; elsewhere a
    /// missing field gives isotropic atrophy in white matter.
    pub fn new(mesh: &'a LabeledMesh, config: &'a Config, mode: Mode, axonal: Option<&AxonalField>) -> Result<Self> {
        let mut sim = Self::with_state(mesh, config, mode, axonal, SimState::undeformed(mesh))?;
        sim.state = initialize(mesh, config, mode)?;
        sim.reassemble()?;
        Ok(sim)
    }

    /// Continues from an existing state, e.g. one read back from a snapshot.
    pub fn restart(
        mesh: &'a LabeledMesh,
        config: &'a Config,
        mode: Mode,
        axonal: Option<&AxonalField>,
        state: SimState,
    ) -> Result<Self> {
        let mut sim = Self::with_state(mesh, config, mode, axonal, state)?;
        sim.reassemble()?;
        Ok(sim)
    }

    fn with_state(
        mesh: &'a LabeledMesh,
        config: &'a Config,
        mode: Mode,
        axonal: Option<&AxonalField>,
        state: SimState,
    ) -> Result<Self> {
        config.validate()?;
        let regions = config.region_set();
        mesh.check_regions(&regions)?;
        let region_of: Vec<usize> = mesh
            .region_labels()
            .iter()
            .map(|&l| config.regions.iter().position(|r| r.label == l).expect("checked above"))
            .collect();
        let tissue: Vec<TissueClass> = region_of.iter().map(|&r| config.regions[r].tissue).collect();
        if let Some(field) = axonal {
            if field.len() != mesh.node_count() {
                return Err(Error::validation("axonal field does not match the mesh", vec![]));
            }
        }
        let fibres: Vec<Option<Vec3>> = (0..mesh.element_count())
            .map(|e| match (tissue[e], axonal) {
                (TissueClass::White, Some(field)) => {
                    element_direction(mesh.elements()[e].map(|v| field.direction(v)), &mesh.element_points(e))
                }
                _ => None,
            })
            .collect();
        if mode == Mode::Ad {
            let missing: Vec<usize> = (0..mesh.element_count())
                .filter(|&e| tissue[e] == TissueClass::White && fibres[e].is_none())
                .map(|e| mesh.element_ids()[e] as usize)
                .collect();
            if !missing.is_empty() {
                return Err(Error::validation(
                    format!(
                        "axonal field required: {} white-matter elements lack a direction",
                        missing.len()
                    ),
                    missing,
                ));
            }
        }
        let moduli = region_of
            .iter()
            .map(|&r| (config.regions[r].lambda, config.regions[r].shear_g))
            .collect();
        let alpha_abeta = if mode.has_chemistry() {
            config.bio.effective_alpha_abeta()?
        } else {
            0.0
        };
        let n = mesh.node_count();
        let ne = mesh.element_count();
        if state.c_tau.len() != n || state.c_abeta.len() != n || state.displacement.len() != n {
            return Err(Error::validation("state does not match the mesh nodes", vec![]));
        }
        if state.theta.len() != ne || state.deformation.len() != ne {
            return Err(Error::validation("state does not match the mesh elements", vec![]));
        }
        Ok(Simulation {
            mesh,
            config,
            mode,
            region_of,
            tissue,
            fibres,
            domain: ChemDomain::new(mesh, &regions)?,
            ops: None,
            mechanics: Mechanics::new(mesh, moduli, Support::for_mesh(mesh))?,
            chem: (&config.solver).into(),
            newton: (&config.solver).into(),
            alpha_abeta,
            state,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn mesh(&self) -> &LabeledMesh {
        self.mesh
    }

    pub fn config(&self) -> &Config {
        self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Per-element fibre directions; `None` outside white matter.
    pub fn fibres(&self) -> &[Option<Vec3>] {
        &self.fibres
    }

    pub fn operators(&self) -> Option<&ChemOperators> {
        self.ops.as_ref()
    }

    pub fn chem_domain(&self) -> &ChemDomain {
        &self.domain
    }

    fn reassemble(&mut self) -> Result<()> {
        if !self.mode.has_chemistry() {
            return Ok(());
        }
        let data = ElementData {
            deformation: &self.state.deformation,
            directions: &self.fibres,
            tissue: &self.tissue,
        };
        self.ops = Some(assemble_chem(
            &self.domain,
            self.mesh,
            data,
            &self.config.bio,
            self.mode.transport(),
            self.config.solver.lambda_a_min,
        )?);
        Ok(())
    }

    /// Index of the step that ends at the current time.
    pub fn step_index(&self) -> usize {
        (self.state.time / self.config.solver.dt).round() as usize
    }

    /// Advances by one step of `dt`: Aβ, tau, ϑ, then mechanics (every `mech_every_n` steps).
    pub fn step(&mut self, dt: f64) -> Result<StepReport> {
        let index = self.step_index() + 1;
        let time = self.state.time + dt;
        self.advance(dt, index).map_err(|e| Error::Step {
            step: index,
            time,
            source: Box::new(e),
        })
    }

    fn advance(&mut self, dt: f64, index: usize) -> Result<StepReport> {
        let start = self.state.clone();
        let mut report = self.transport_and_atrophy(&start, dt)?;
        let every = self.config.solver.mech_every_n.max(1);
        if index.is_multiple_of(every) {
            report.newton = Some(self.solve_mechanics()?);
            if self.config.solver.corrector_pass {
                // Repeat the step with operators evaluated at the predicted configuration.
                let predicted = report.newton.take();
                report = self.transport_and_atrophy(&start, dt)?;
                let corrected = self.solve_mechanics()?;
                let mut n = predicted.unwrap_or_default();
                n.iterations += corrected.iterations;
                n.residuals.extend(corrected.residuals);
                n.line_search_cuts += corrected.line_search_cuts;
                report.newton = Some(n);
            }
        }
        self.state.time = start.time + dt;
        // Keep times on the dt grid so output times do not drift over long runs.
        let grid = index as f64 * self.config.solver.dt;
        if (self.state.time - grid).abs() < 1e-9 * dt {
            self.state.time = grid;
        }
        Ok(report)
    }

    fn transport_and_atrophy(&mut self, start: &SimState, dt: f64) -> Result<StepReport> {
        let mut report = StepReport::default();
        let bio = &self.config.bio;
        if let Some(ops) = &self.ops {
            let ab_old = self.domain.gather(&start.c_abeta);
            let mut ab = ab_old.clone();
            report.abeta = step_species(
                &ops.mass,
                &ops.stiffness_abeta,
                &mut ab,
                dt,
                &ConstantRate(self.alpha_abeta),
                &self.chem,
            )?;
            let mut tau = self.domain.gather(&start.c_tau);
            let rate = TauRate {
                bio,
                abeta_start: &ab_old,
                abeta_end: &ab,
            };
            report.tau = step_species(&ops.mass, &ops.stiffness_tau, &mut tau, dt, &rate, &self.chem)?;
            self.domain.scatter(&ab, &mut self.state.c_abeta);
            self.domain.scatter(&tau, &mut self.state.c_tau);
        }
        let config = self.config;
        let params: Vec<&RegionParams> = self.region_of.iter().map(|&r| &config.regions[r]).collect();
        let avg = self.mode.has_chemistry().then(|| {
            self.domain
                .element_average(&self.state.c_tau, self.mesh.element_count())
        });
        self.state.theta.clone_from(&start.theta);
        advance_theta(&mut self.state.theta, avg.as_deref(), dt, &params, bio);
        Ok(report)
    }

    /// Equilibrium for the current ϑ, warm-started from the current displacement.
    pub fn solve_mechanics(&mut self) -> Result<NewtonReport> {
        let mut u = self.state.displacement.clone();
        let report = self
            .mechanics
            .solve(&mut u, &self.state.theta, &self.fibres, &self.newton)?;
        self.state.displacement = u;
        self.state.deformation = self.mechanics.deformation_gradients(&self.state.displacement);
        self.reassemble()?;
        Ok(report)
    }
}

/// Seeded initial state: region-constant seeds on the nodes of each seeded region (tissue nodes
/// only), ϑ = 1, u = 0. Healthy mode has no protein.
pub fn initialize(mesh: &LabeledMesh, config: &Config, mode: Mode) -> Result<SimState> {
    let mut state = SimState::undeformed(mesh);
    if !mode.has_chemistry() {
        return Ok(state);
    }
    let regions = config.region_set();
    config.seeds.validate(&regions)?;
    let present: std::collections::BTreeSet<u32> = mesh.region_labels().iter().copied().collect();
    for (species, seeds) in [
        (&mut state.c_tau, &config.seeds.tau),
        (&mut state.c_abeta, &config.seeds.abeta),
    ] {
        for (name, &value) in seeds {
            let region = config
                .region_by_name(name)
                .ok_or_else(|| Error::Config(format!("seed region `{name}` is not defined")))?;
            if !present.contains(&region.label) {
                return Err(Error::Config(format!(
                    "seed region `{name}` (label {}) is absent from the mesh",
                    region.label
                )));
            }
            for (e, t) in mesh.elements().iter().enumerate() {
                if mesh.region_labels()[e] == region.label {
                    for &v in t {
                        species[v] = species[v].max(value);
                    }
                }
            }
        }
    }
    Ok(state)
}
