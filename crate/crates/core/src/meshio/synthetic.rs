//! Structured tetrahedral meshes for verification runs and demos.

use std::collections::HashMap;

use crate::error::Result;
use crate::fe::{signed_volume, Vec3};

use super::axonal::AxonalEntries;
use super::mesh::{BoundaryFace, FaceLabel, LabeledMesh};
use super::regions::labels;

/// Axis-aligned box split into `cells` hexahedra, each cut into six tetrahedra around its main
/// diagonal (Freudenthal–Kuhn). The split is conforming and, on cubic cells, every tetrahedron is
/// non-obtuse, so isotropic P1 stiffness matrices are M-matrices.
#[derive(Debug, Clone, Copy)]
pub struct BoxGrid {
    pub origin: Vec3,
    pub size: Vec3,
    pub cells: [usize; 3],
}

impl BoxGrid {
    pub fn new(origin: Vec3, size: Vec3, cells: [usize; 3]) -> Self {
        BoxGrid { origin, size, cells }
    }

    pub fn spacing(&self) -> Vec3 {
        Vec3::new(
            self.size.x / self.cells[0] as f64,
            self.size.y / self.cells[1] as f64,
            self.size.z / self.cells[2] as f64,
        )
    }

    fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * (self.cells[1] + 1) + j) * (self.cells[0] + 1) + i
    }

    /// Builds the mesh. `label` maps a cell centroid to a region label; `exterior` labels the
    /// outer surface (unlisted faces are FREE); faces between a `fluid_labels` element and any
    /// other element become INTERIOR_FLUID.
    pub fn build(
        &self,
        label: impl Fn(Vec3) -> u32,
        exterior: Option<FaceLabel>,
        fluid_labels: &[u32],
    ) -> Result<LabeledMesh> {
        let h = self.spacing();
        let [nx, ny, nz] = self.cells;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
        for k in 0..=nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    nodes.push(self.origin + Vec3::new(i as f64 * h.x, j as f64 * h.y, k as f64 * h.z));
                }
            }
        }

        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut elements = Vec::with_capacity(6 * nx * ny * nz);
        let mut region_labels = Vec::with_capacity(6 * nx * ny * nz);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let centroid =
                        self.origin + Vec3::new((i as f64 + 0.5) * h.x, (j as f64 + 0.5) * h.y, (k as f64 + 0.5) * h.z);
                    let l = label(centroid);
                    for p in PERMS {
                        let mut c = [i, j, k];
                        let mut tet = [self.node_index(i, j, k); 4];
                        for (s, &axis) in p.iter().enumerate() {
                            c[axis] += 1;
                            tet[s + 1] = self.node_index(c[0], c[1], c[2]);
                        }
                        if signed_volume(&tet.map(|n| nodes[n])) < 0.0 {
                            tet.swap(2, 3);
                        }
                        elements.push(tet);
                        region_labels.push(l);
                    }
                }
            }
        }

        let mut owners: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
        for (e, t) in elements.iter().enumerate() {
            for skip in 0..4 {
                let mut f = [0; 3];
                let mut m = 0;
                for (v, &n) in t.iter().enumerate() {
                    if v != skip {
                        f[m] = n;
                        m += 1;
                    }
                }
                f.sort_unstable();
                owners.entry(f).or_default().push(e);
            }
        }
        let mut faces: Vec<BoundaryFace> = owners
            .into_iter()
            .filter_map(|(f, es)| match es.as_slice() {
                [_] => exterior.map(|label| BoundaryFace { nodes: f, label }),
                [a, b] => {
                    let fa = fluid_labels.contains(&region_labels[*a]);
                    let fb = fluid_labels.contains(&region_labels[*b]);
                    (fa != fb).then_some(BoundaryFace {
                        nodes: f,
                        label: FaceLabel::InteriorFluid,
                    })
                }
                _ => None,
            })
            .collect();
        faces.sort_by_key(|f| f.nodes);

        LabeledMesh::new(nodes, elements, region_labels, faces)
    }
}

/// Coarse label layout of the toy brain: 12 × 10 × 8 voxels of 4 mm.
fn toy_brain_label(i: usize, j: usize, k: usize) -> u32 {
    use labels::*;
    if i == 0 || i == 11 || j == 0 || j == 9 || k == 0 || k == 7 {
        return CSF;
    }
    match (i, j, k) {
        (5..=6, 4..=5, 1) => BRAINSTEM,
        (8..=10, _, 1) => CEREBELLUM_CORTEX,
        (8..=9, 3..=6, 2) => CEREBELLUM_WM,
        (2, 3, 2) => ENTORHINAL,
        (3, 3, 2) => HIPPOCAMPUS,
        (3, 2, 2) => AMYGDALA,
        (5..=6, 4..=5, 2) => THALAMUS,
        (5..=6, 4..=5, 3) => VENTRICLES,
        (4..=7, 4..=5, 4) => CORPUS_CALLOSUM,
        _ if i == 1 || i == 10 || j == 1 || j == 8 || k == 1 || k == 6 => CEREBRAL_CORTEX,
        _ => WHITE_MATTER,
    }
}

const TOY_VOXEL_MM: f64 = 4.0;
const TOY_VOXELS: [usize; 3] = [12, 10, 8];

/// Fibre direction used by the toy brain: vertical in the brainstem, lateral in the corpus
/// callosum, radial elsewhere.
pub fn toy_brain_direction(p: Vec3) -> Vec3 {
    let v = |x: f64| (x / TOY_VOXEL_MM).floor() as i64;
    let (i, j, k) = (v(p.x), v(p.y), v(p.z));
    if (5..=6).contains(&i) && (4..=5).contains(&j) && k <= 2 {
        return Vec3::z();
    }
    if (4..=7).contains(&i) && (4..=5).contains(&j) && k == 4 {
        return Vec3::x();
    }
    let centre = Vec3::new(24.0, 20.0, 16.0);
    let r = Vec3::new(p.x - centre.x, 0.5 * (p.y - centre.y), p.z - centre.z);
    if r.norm() < 1e-6 {
        Vec3::x()
    } else {
        r.normalize()
    }
}

/// Twelve-region synthetic brain (48 × 40 × 32 mm) with an outer CSF shell, ventricles, deep
/// grey nuclei and white-matter tracts. `refine` subdivides each 4 mm voxel per axis.
pub fn toy_brain(refine: usize) -> Result<(LabeledMesh, AxonalEntries)> {
    let refine = refine.max(1);
    let grid = BoxGrid::new(
        Vec3::zeros(),
        Vec3::new(48.0, 40.0, 32.0),
        TOY_VOXELS.map(|n| n * refine),
    );
    let mesh = grid.build(
        |c| {
            let v = |x: f64| (x / TOY_VOXEL_MM).floor() as usize;
            toy_brain_label(v(c.x), v(c.y), v(c.z))
        },
        Some(FaceLabel::OuterCsf),
        &[labels::CSF, labels::VENTRICLES],
    )?;
    let entries = AxonalEntries::from_entries(mesh.nodes().iter().map(|&p| (p, toy_brain_direction(p))));
    Ok((mesh, entries))
}
