//! Total-Lagrangian P1 equilibrium solver with Newton iteration and backtracking.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fe::{Mat3, TetGeometry, Vec3};
use crate::meshio::LabeledMesh;
use crate::params::SolverSettings;
use crate::sparse::{for_each_ordered, norm, pcg, CsrMatrix, CsrPattern, DirectSolver};

use super::constitutive::ElementMaterial;

/// How rigid-body motion is removed.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Zero displacement at the listed nodes.
    Dirichlet(Vec<usize>),
    /// Six Lagrange multipliers enforcing zero mean translation and rotation (Σu = 0, ΣX×u = 0).
    RigidModes,
}

impl Support {
    /// Skull constraint on OUTER_CSF nodes, or rigid-mode constraints when the mesh has none.
    pub fn for_mesh(mesh: &LabeledMesh) -> Self {
        let nodes = mesh.outer_csf_nodes();
        if nodes.is_empty() {
            Support::RigidModes
        } else {
            Support::Dirichlet(nodes)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Residual reduction relative to the first iterate.
    pub tol: f64,
    pub abs_tol: f64,
    pub max_iters: usize,
    pub max_cuts: usize,
    pub direct_max_dofs: usize,
    pub linear_tol: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        (&SolverSettings::default()).into()
    }
}

impl From<&SolverSettings> for NewtonSettings {
    fn from(s: &SolverSettings) -> Self {
        NewtonSettings {
            tol: s.newton_tol,
            abs_tol: s.newton_abs_tol,
            max_iters: s.max_newton_iters,
            max_cuts: s.max_line_search_cuts,
            direct_max_dofs: s.direct_solver_max_dofs,
            linear_tol: s.linear_tol,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Free-DOF residual norm before each iteration and after the last.
    pub residuals: Vec<f64>,
    pub line_search_cuts: usize,
}

/// Discretized equilibrium problem on a fixed mesh.
pub struct Mechanics {
    geometry: Vec<TetGeometry>,
    elements: Vec<[usize; 4]>,
    element_ids: Vec<u64>,
    moduli: Vec<(f64, f64)>,
    fixed: Vec<bool>,
    rigid: Option<Vec<[f64; 6]>>,
    pattern: Arc<CsrPattern>,
    direct: DirectSolver,
}

impl Mechanics {
    /// `moduli[e]` holds (λ, G) of element `e`.
    pub fn new(mesh: &LabeledMesh, moduli: Vec<(f64, f64)>, support: Support) -> Result<Self> {
        if moduli.len() != mesh.element_count() {
            return Err(Error::validation("one (λ, G) pair per element required", vec![]));
        }
        let n = mesh.node_count();
        let ndof = 3 * n;
        let mut fixed = vec![false; ndof];
        let rigid = match support {
            Support::Dirichlet(nodes) => {
                if nodes.is_empty() {
                    return Err(Error::validation("no Dirichlet nodes given", vec![]));
                }
                for v in nodes {
                    fixed[3 * v..3 * v + 3].iter_mut().for_each(|f| *f = true);
                }
                None
            }
            Support::RigidModes => {
                let centre = mesh.nodes().iter().sum::<Vec3>() / n as f64;
                // Row coefficients of the six constraints at each DOF.
                let mut rows = vec![[0.0; 6]; ndof];
                for (v, p) in mesh.nodes().iter().enumerate() {
                    let x = p - centre;
                    for d in 0..3 {
                        rows[3 * v + d][d] = 1.0;
                    }
                    // (x × u)_0 = x_y u_z − x_z u_y, etc.
                    rows[3 * v + 2][3] = x.y;
                    rows[3 * v + 1][3] = -x.z;
                    rows[3 * v][4] = x.z;
                    rows[3 * v + 2][4] = -x.x;
                    rows[3 * v + 1][5] = x.x;
                    rows[3 * v][5] = -x.y;
                }
                Some(rows)
            }
        };

        let m = ndof + if rigid.is_some() { 6 } else { 0 };
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for t in mesh.elements() {
            let dofs: Vec<usize> = t.iter().flat_map(|&v| (0..3).map(move |d| 3 * v + d)).collect();
            for &i in &dofs {
                rows[i].extend_from_slice(&dofs);
            }
        }
        if rigid.is_some() {
            for row in rows.iter_mut().take(ndof) {
                row.extend(ndof..ndof + 6);
            }
            for row in rows.iter_mut().skip(ndof) {
                row.extend(0..ndof);
            }
        }
        let geometry = (0..mesh.element_count()).map(|e| mesh.geometry(e)).collect();
        Ok(Mechanics {
            geometry,
            elements: mesh.elements().to_vec(),
            element_ids: mesh.element_ids().to_vec(),
            moduli,
            fixed,
            rigid,
            pattern: Arc::new(CsrPattern::from_rows(rows)),
            direct: DirectSolver::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.fixed.len() / 3
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// Element materials for a given atrophy field and per-element fibres (`None` = isotropic).
    pub fn materials(&self, theta: &[f64], fibres: &[Option<Vec3>]) -> Vec<ElementMaterial> {
        self.moduli
            .iter()
            .zip(theta)
            .zip(fibres)
            .map(|((&(l, g), &t), &a)| ElementMaterial::new(l, g, t, a))
            .collect()
    }

    pub fn deformation_gradient(&self, e: usize, u: &[Vec3]) -> Mat3 {
        self.geometry[e].deformation_gradient(&self.elements[e].map(|v| u[v]))
    }

    pub fn deformation_gradients(&self, u: &[Vec3]) -> Vec<Mat3> {
        (0..self.elements.len())
            .map(|e| self.deformation_gradient(e, u))
            .collect()
    }

    fn element_f(&self, e: usize, u: &[Vec3]) -> Result<Mat3> {
        let f = self.deformation_gradient(e, u);
        let det = f.determinant();
        if det > 0.0 {
            Ok(f)
        } else {
            Err(Error::Inversion {
                element: self.element_ids[e] as usize,
                det,
            })
        }
    }

    fn inversion(&self, e: usize, f: &Mat3) -> impl Fn(Error) -> Error {
        let element = self.element_ids[e] as usize;
        let det = f.determinant();
        move |_| Error::Inversion { element, det }
    }

    /// Total strain energy.
    pub fn energy(&self, u: &[Vec3], mats: &[ElementMaterial]) -> Result<f64> {
        let mut total = 0.0;
        for_each_ordered(
            self.elements.len(),
            |e| {
                let f = self.element_f(e, u)?;
                Ok(self.geometry[e].volume * mats[e].energy(&f).map_err(self.inversion(e, &f))?)
            },
            |_, w| total += w,
        )?;
        Ok(total)
    }

    /// Internal force vector (3 entries per node), including constrained DOFs.
    pub fn residual(&self, u: &[Vec3], mats: &[ElementMaterial]) -> Result<Vec<f64>> {
        let mut r = vec![0.0; self.fixed.len()];
        for_each_ordered(
            self.elements.len(),
            |e| {
                let f = self.element_f(e, u)?;
                let p = mats[e].piola(&f).map_err(self.inversion(e, &f))?;
                let geo = &self.geometry[e];
                Ok(geo.grads.map(|g| p * g * geo.volume))
            },
            |e, forces| {
                for (a, &v) in self.elements[e].iter().enumerate() {
                    for d in 0..3 {
                        r[3 * v + d] += forces[a][d];
                    }
                }
            },
        )?;
        Ok(r)
    }

    /// Unconstrained tangent ∂r/∂u on the full pattern (constraint rows left empty).
    pub fn tangent(&self, u: &[Vec3], mats: &[ElementMaterial]) -> Result<CsrMatrix> {
        let mut k = CsrMatrix::zeros(self.pattern.clone());
        for_each_ordered(
            self.elements.len(),
            |e| {
                let f = self.element_f(e, u)?;
                let a = mats[e].tangent(&f).map_err(self.inversion(e, &f))?;
                let geo = &self.geometry[e];
                let mut ke = [[0.0; 12]; 12];
                for (na, ga) in geo.grads.iter().enumerate() {
                    for (nb, gb) in geo.grads.iter().enumerate() {
                        for i in 0..3 {
                            for kk in 0..3 {
                                let mut s = 0.0;
                                for jj in 0..3 {
                                    for l in 0..3 {
                                        s += a[(3 * i + jj, 3 * kk + l)] * ga[jj] * gb[l];
                                    }
                                }
                                ke[3 * na + i][3 * nb + kk] = geo.volume * s;
                            }
                        }
                    }
                }
                Ok(ke)
            },
            |e, ke| {
                let dofs: [usize; 12] = std::array::from_fn(|i| 3 * self.elements[e][i / 3] + i % 3);
                k.add_local(&dofs, &ke);
            },
        )?;
        Ok(k)
    }

    /// Cauchy stress per element.
    pub fn cauchy_stresses(&self, u: &[Vec3], mats: &[ElementMaterial]) -> Result<Vec<Mat3>> {
        (0..self.elements.len())
            .map(|e| {
                let f = self.element_f(e, u)?;
                mats[e].cauchy(&f).map_err(self.inversion(e, &f))
            })
            .collect()
    }

    fn free_norm(&self, r: &[f64]) -> f64 {
        let masked: Vec<f64> = r
            .iter()
            .zip(&self.fixed)
            .map(|(&v, &f)| if f { 0.0 } else { v })
            .collect();
        norm(&masked)
    }

    fn linear_solve(&mut self, k: &CsrMatrix, rhs: &[f64], settings: &NewtonSettings) -> Result<Vec<f64>> {
        if self.rigid.is_some() || k.n() <= settings.direct_max_dofs {
            self.direct.solve(k, rhs)
        } else {
            let mut x = vec![0.0; rhs.len()];
            pcg(k, rhs, &mut x, settings.linear_tol, 10 * rhs.len())?;
            Ok(x)
        }
    }

    /// Newton solve for equilibrium, starting from (and overwriting) `u`.
    pub fn solve(
        &mut self,
        u: &mut [Vec3],
        theta: &[f64],
        fibres: &[Option<Vec3>],
        settings: &NewtonSettings,
    ) -> Result<NewtonReport> {
        let mats = self.materials(theta, fibres);
        let ndof = self.fixed.len();
        for (v, x) in u.iter_mut().enumerate() {
            for d in 0..3 {
                if self.fixed[3 * v + d] {
                    x[d] = 0.0;
                }
            }
        }

        let mut report = NewtonReport::default();
        let mut r = self.residual(u, &mats)?;
        let mut r_norm = self.free_norm(&r);
        let mut energy = self.energy(u, &mats)?;
        report.residuals.push(r_norm);
        if r_norm <= settings.abs_tol {
            return Ok(report);
        }
        let target = (settings.tol * r_norm).max(settings.abs_tol);

        for it in 1..=settings.max_iters {
            let mut k = self.tangent(u, &mats)?;
            let m = k.n();
            let mut rhs = vec![0.0; m];
            for i in 0..ndof {
                rhs[i] = -r[i];
            }
            if let Some(rows) = &self.rigid {
                for (i, c) in rows.iter().enumerate() {
                    for (q, &v) in c.iter().enumerate() {
                        if v != 0.0 {
                            k.add(i, ndof + q, v);
                            k.add(ndof + q, i, v);
                            rhs[ndof + q] -= v * u[i / 3][i % 3];
                        }
                    }
                }
            }
            for i in 0..ndof {
                if self.fixed[i] {
                    k.constrain(i, 0.0, &mut rhs);
                }
            }
            let du = self.linear_solve(&k, &rhs, settings)?;

            let mut step = 1.0;
            let mut cuts = 0;
            let accepted = loop {
                let trial: Vec<Vec3> = u
                    .iter()
                    .enumerate()
                    .map(|(v, x)| x + Vec3::new(du[3 * v], du[3 * v + 1], du[3 * v + 2]) * step)
                    .collect();
                let outcome = self
                    .energy(&trial, &mats)
                    .and_then(|en| Ok((en, self.residual(&trial, &mats)?)));
                match outcome {
                    Ok((en, rt)) => {
                        let rn = self.free_norm(&rt);
                        let decreased = en <= energy + 1e-12 * energy.abs() || rn < r_norm;
                        if rn.is_finite() && (decreased || cuts == settings.max_cuts) {
                            break Some((trial, en, rt, rn));
                        }
                    }
                    Err(Error::Inversion { element, det }) if cuts == settings.max_cuts => {
                        return Err(Error::Solver(format!(
                            "line search could not avoid inversion of element {element} (det F = {det:e}) after {cuts} cuts"
                        )));
                    }
                    Err(Error::Inversion { .. }) => {}
                    Err(e) => return Err(e),
                }
                if cuts == settings.max_cuts {
                    break None;
                }
                cuts += 1;
                step *= 0.5;
            };
            let Some((trial, en, rt, rn)) = accepted else {
                return Err(Error::Solver("line search failed to produce a finite residual".into()));
            };
            report.line_search_cuts += cuts;
            u.copy_from_slice(&trial);
            energy = en;
            r = rt;
            r_norm = rn;
            report.residuals.push(r_norm);
            report.iterations = it;
            if r_norm <= target {
                return Ok(report);
            }
        }
        Err(Error::Solver(format!(
            "Newton did not converge in {} iterations; residual history {:?}",
            settings.max_iters, report.residuals
        )))
    }
}

/// One-shot equilibrium solve on `mesh`. `moduli`, `theta` and `fibres` are per element.
pub fn solve_equilibrium(
    mesh: &LabeledMesh,
    moduli: Vec<(f64, f64)>,
    theta: &[f64],
    fibres: &[Option<Vec3>],
    support: Support,
    u_guess: Vec<Vec3>,
    settings: &NewtonSettings,
) -> Result<(Vec<Vec3>, NewtonReport)> {
    let mut mech = Mechanics::new(mesh, moduli, support)?;
    let mut u = u_guess;
    let report = mech.solve(&mut u, theta, fibres, settings)?;
    Ok((u, report))
}
