use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fe::{signed_volume, TetGeometry, Vec3};

use super::regions::{RegionSet, TissueClass};

/// Elements with signed volume at or below this value (mm³) are rejected.
pub const VOLUME_EPSILON: f64 = 1e-12;

/// Label attached to a boundary triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceLabel {
    /// Outer surface of the CSF domain; displacement is clamped here.
    OuterCsf,
    /// Fluid–tissue interface inside the domain; chemistry sees a no-flux wall.
    InteriorFluid,
    /// Traction-free, no-flux exterior surface.
    Free,
}

impl fmt::Display for FaceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FaceLabel::OuterCsf => "OUTER_CSF",
            FaceLabel::InteriorFluid => "INTERIOR_FLUID",
            FaceLabel::Free => "FREE",
        })
    }
}

impl FromStr for FaceLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "OUTER_CSF" => Ok(FaceLabel::OuterCsf),
            "INTERIOR_FLUID" => Ok(FaceLabel::InteriorFluid),
            "FREE" => Ok(FaceLabel::Free),
            other => Err(format!("unknown face label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub nodes: [usize; 3],
    pub label: FaceLabel,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Swap two vertices of negatively oriented elements instead of rejecting them.
    pub reorient: bool,
}

/// Tetrahedral mesh with one region label per element.
///
/// Construction validates connectivity, orientation and the boundary surface; a value of this
/// type always satisfies those invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMesh {
    nodes: Vec<Vec3>,
    node_ids: Vec<u64>,
    elements: Vec<[usize; 4]>,
    element_ids: Vec<u64>,
    region_labels: Vec<u32>,
    boundary_faces: Vec<BoundaryFace>,
}

fn face_key(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

fn tet_faces(t: &[usize; 4]) -> [[usize; 3]; 4] {
    [
        [t[1], t[2], t[3]],
        [t[0], t[2], t[3]],
        [t[0], t[1], t[3]],
        [t[0], t[1], t[2]],
    ]
}

impl LabeledMesh {
    /// Builds a mesh from zero-based connectivity. Node and element ids default to `1..`.
    pub fn new(
        nodes: Vec<Vec3>,
        elements: Vec<[usize; 4]>,
        region_labels: Vec<u32>,
        boundary_faces: Vec<BoundaryFace>,
    ) -> Result<Self> {
        let node_ids = (1..=nodes.len() as u64).collect();
        let element_ids = (1..=elements.len() as u64).collect();
        Self::with_ids(
            nodes,
            node_ids,
            elements,
            element_ids,
            region_labels,
            boundary_faces,
            ReadOptions::default(),
        )
    }

    fn with_ids(
        nodes: Vec<Vec3>,
        node_ids: Vec<u64>,
        mut elements: Vec<[usize; 4]>,
        element_ids: Vec<u64>,
        region_labels: Vec<u32>,
        boundary_faces: Vec<BoundaryFace>,
        opts: ReadOptions,
    ) -> Result<Self> {
        if elements.len() != region_labels.len() || elements.len() != element_ids.len() {
            return Err(Error::validation("element and label counts differ", vec![]));
        }
        let bad: Vec<usize> = elements
            .iter()
            .enumerate()
            .filter(|(_, t)| t.iter().any(|&n| n >= nodes.len()))
            .map(|(e, _)| e)
            .collect();
        if !bad.is_empty() {
            return Err(Error::validation("element references a missing node", bad));
        }

        let mut degenerate = Vec::new();
        for (e, t) in elements.iter_mut().enumerate() {
            let vol = signed_volume(&t.map(|n| nodes[n]));
            if vol < -VOLUME_EPSILON && opts.reorient {
                t.swap(2, 3);
            } else if vol <= VOLUME_EPSILON {
                degenerate.push(element_ids[e] as usize);
            }
        }
        if !degenerate.is_empty() {
            return Err(Error::validation(
                format!("inverted or degenerate tetrahedra (volume <= {VOLUME_EPSILON:e}): element ids {degenerate:?}"),
                degenerate,
            ));
        }

        let mesh = LabeledMesh {
            nodes,
            node_ids,
            elements,
            element_ids,
            region_labels,
            boundary_faces,
        };
        mesh.check_boundary()?;
        Ok(mesh)
    }

    /// Face-to-element incidence counts.
    fn face_counts(&self) -> HashMap<[usize; 3], u32> {
        let mut counts = HashMap::with_capacity(self.elements.len() * 3);
        for t in &self.elements {
            for f in tet_faces(t) {
                *counts.entry(face_key(f)).or_insert(0) += 1;
            }
        }
        counts
    }

    fn check_boundary(&self) -> Result<()> {
        let counts = self.face_counts();
        if let Some((f, _)) = counts.iter().find(|(_, &c)| c > 2) {
            return Err(Error::validation(
                format!(
                    "face {:?} shared by more than two elements",
                    f.map(|n| self.node_ids[n])
                ),
                vec![],
            ));
        }

        // Closed 2-manifold: every edge of the exterior surface joins exactly two exterior faces.
        let mut edge_count: HashMap<[usize; 2], u32> = HashMap::new();
        for (f, _) in counts.iter().filter(|(_, &c)| c == 1) {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[0], f[2])] {
                *edge_count.entry([a.min(b), a.max(b)]).or_insert(0) += 1;
            }
        }
        if let Some((e, c)) = edge_count.iter().find(|(_, &c)| c != 2) {
            return Err(Error::validation(
                format!(
                    "boundary surface is not a closed manifold: edge {:?} used by {c} boundary faces",
                    e.map(|n| self.node_ids[n])
                ),
                vec![],
            ));
        }

        for bf in &self.boundary_faces {
            if bf.nodes.iter().any(|&n| n >= self.nodes.len()) {
                return Err(Error::validation("boundary face references a missing node", vec![]));
            }
            let c = counts.get(&face_key(bf.nodes)).copied().unwrap_or(0);
            let ok = match bf.label {
                FaceLabel::InteriorFluid => c == 2,
                FaceLabel::OuterCsf | FaceLabel::Free => c == 1,
            };
            if !ok {
                return Err(Error::validation(
                    format!(
                        "{} face {:?} is not a {} face of the mesh",
                        bf.label,
                        bf.nodes.map(|n| self.node_ids[n]),
                        if bf.label == FaceLabel::InteriorFluid {
                            "shared"
                        } else {
                            "exterior"
                        }
                    ),
                    vec![],
                ));
            }
        }
        Ok(())
    }

    /// Checks that every element label is declared in `regions`.
    pub fn check_regions(&self, regions: &RegionSet) -> Result<()> {
        let mut missing: Vec<u32> = self
            .region_labels
            .iter()
            .filter(|l| regions.by_label(**l).is_none())
            .copied()
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        missing.sort_unstable();
        Err(Error::validation(
            format!("region labels {missing:?} not declared in the region set"),
            missing.iter().map(|&l| l as usize).collect(),
        ))
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn node_ids(&self) -> &[u64] {
        &self.node_ids
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn element_ids(&self) -> &[u64] {
        &self.element_ids
    }

    pub fn region_labels(&self) -> &[u32] {
        &self.region_labels
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn element_points(&self, e: usize) -> [Vec3; 4] {
        self.elements[e].map(|n| self.nodes[n])
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        signed_volume(&self.element_points(e))
    }

    pub fn element_centroid(&self, e: usize) -> Vec3 {
        self.element_points(e).iter().sum::<Vec3>() / 4.0
    }

    pub fn geometry(&self, e: usize) -> TetGeometry {
        TetGeometry::new(&self.element_points(e)).expect("validated mesh has no degenerate element")
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.element_count()).map(|e| self.element_volume(e)).sum()
    }

    /// Nodes on faces labeled [`FaceLabel::OuterCsf`], sorted.
    pub fn outer_csf_nodes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary_faces
            .iter()
            .filter(|f| f.label == FaceLabel::OuterCsf)
            .flat_map(|f| f.nodes)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Per-node flag: true when the node touches at least one element of the given class.
    pub fn nodes_touching(&self, regions: &RegionSet, class: TissueClass) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        for (t, &l) in self.elements.iter().zip(&self.region_labels) {
            if regions.by_label(l).map(|r| r.tissue) == Some(class) {
                for &n in t {
                    flags[n] = true;
                }
            }
        }
        flags
    }

    /// Serializes to the line-oriented `MESH v1` format.
    pub fn to_mesh_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "MESH v1").unwrap();
        writeln!(s, "NODES {}", self.nodes.len()).unwrap();
        for (id, p) in self.node_ids.iter().zip(&self.nodes) {
            writeln!(s, "{id} {:e} {:e} {:e}", p.x, p.y, p.z).unwrap();
        }
        writeln!(s, "TETS {}", self.elements.len()).unwrap();
        for ((id, t), l) in self.element_ids.iter().zip(&self.elements).zip(&self.region_labels) {
            let n = t.map(|n| self.node_ids[n]);
            writeln!(s, "{id} {} {} {} {} {l}", n[0], n[1], n[2], n[3]).unwrap();
        }
        writeln!(s, "BFACES {}", self.boundary_faces.len()).unwrap();
        for f in &self.boundary_faces {
            let n = f.nodes.map(|n| self.node_ids[n]);
            writeln!(s, "{} {} {} {}", n[0], n[1], n[2], f.label).unwrap();
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_mesh_string()).map_err(|e| Error::io(path, e))
    }
}

/// Reads a `MESH v1` file, rejecting inverted elements.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<LabeledMesh> {
    read_mesh_with(path, ReadOptions::default())
}

pub fn read_mesh_with(path: impl AsRef<Path>, opts: ReadOptions) -> Result<LabeledMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text, &path.display().to_string(), opts)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    context: &'a str,
}

impl<'a> Lines<'a> {
    /// Next non-blank, non-comment line with its 1-based number.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Some((i + 1, t));
            }
        }
        None
    }

    fn expect_line(&mut self, what: &str, last: usize) -> Result<(usize, &'a str)> {
        self.next_content().ok_or_else(|| {
            Error::parse(
                self.context,
                last + 1,
                format!("unexpected end of file, expected {what}"),
            )
        })
    }

    fn section(&mut self, keyword: &str, last: usize) -> Result<(usize, usize)> {
        let (ln, line) = self.expect_line(keyword, last)?;
        let mut it = line.split_whitespace();
        if it.next() != Some(keyword) {
            return Err(Error::parse(self.context, ln, format!("expected `{keyword} <count>`")));
        }
        let count = it
            .next()
            .and_then(|c| c.parse::<usize>().ok())
            .ok_or_else(|| Error::parse(self.context, ln, format!("`{keyword}` needs a count")))?;
        if it.next().is_some() {
            return Err(Error::parse(self.context, ln, "trailing tokens after section count"));
        }
        Ok((ln, count))
    }
}

fn tokens<'a>(ctx: &str, ln: usize, line: &'a str, n: usize, what: &str) -> Result<Vec<&'a str>> {
    let t: Vec<&str> = line.split_whitespace().collect();
    if t.len() != n {
        return Err(Error::parse(
            ctx,
            ln,
            format!("{what} line needs {n} fields, found {}", t.len()),
        ));
    }
    Ok(t)
}

fn num<T: FromStr>(ctx: &str, ln: usize, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(ctx, ln, format!("invalid number `{tok}`")))
}

/// Parses `MESH v1` text. `context` names the source in error messages.
pub fn parse_mesh(text: &str, context: &str, opts: ReadOptions) -> Result<LabeledMesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        context,
    };
    let (mut ln, header) = lines.expect_line("`MESH v1` header", 0)?;
    if header.split_whitespace().collect::<Vec<_>>() != ["MESH", "v1"] {
        return Err(Error::parse(context, ln, "expected header `MESH v1`"));
    }

    let (l, n_nodes) = lines.section("NODES", ln)?;
    ln = l;
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut node_ids = Vec::with_capacity(n_nodes);
    let mut index_of: HashMap<u64, usize> = HashMap::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (l, line) = lines.expect_line("node", ln)?;
        ln = l;
        let t = tokens(context, ln, line, 4, "node")?;
        let id: u64 = num(context, ln, t[0])?;
        let p = Vec3::new(
            num(context, ln, t[1])?,
            num(context, ln, t[2])?,
            num(context, ln, t[3])?,
        );
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::parse(context, ln, "non-finite coordinate"));
        }
        if index_of.insert(id, nodes.len()).is_some() {
            return Err(Error::parse(context, ln, format!("duplicate node id {id}")));
        }
        nodes.push(p);
        node_ids.push(id);
    }
    let node_ref = |ln: usize, tok: &str| -> Result<usize> {
        let id: u64 = num(context, ln, tok)?;
        index_of
            .get(&id)
            .copied()
            .ok_or_else(|| Error::parse(context, ln, format!("unknown node id {id}")))
    };

    let (l, n_tets) = lines.section("TETS", ln)?;
    ln = l;
    let mut elements = Vec::with_capacity(n_tets);
    let mut element_ids = Vec::with_capacity(n_tets);
    let mut labels = Vec::with_capacity(n_tets);
    let mut seen_ids = HashSet::with_capacity(n_tets);
    for _ in 0..n_tets {
        let (l, line) = lines.expect_line("tetrahedron", ln)?;
        ln = l;
        let t = tokens(context, ln, line, 6, "tetrahedron (id n1 n2 n3 n4 label)")?;
        let id: u64 = num(context, ln, t[0])?;
        if !seen_ids.insert(id) {
            return Err(Error::parse(context, ln, format!("duplicate element id {id}")));
        }
        let tet = [
            node_ref(ln, t[1])?,
            node_ref(ln, t[2])?,
            node_ref(ln, t[3])?,
            node_ref(ln, t[4])?,
        ];
        let distinct: HashSet<usize> = tet.iter().copied().collect();
        if distinct.len() != 4 {
            return Err(Error::parse(context, ln, "tetrahedron repeats a node"));
        }
        elements.push(tet);
        element_ids.push(id);
        labels.push(num(context, ln, t[5])?);
    }

    let (l, n_faces) = lines.section("BFACES", ln)?;
    ln = l;
    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let (l, line) = lines.expect_line("boundary face", ln)?;
        ln = l;
        let t = tokens(context, ln, line, 4, "boundary face (n1 n2 n3 label)")?;
        let label = t[3].parse().map_err(|m: String| Error::parse(context, ln, m))?;
        faces.push(BoundaryFace {
            nodes: [node_ref(ln, t[0])?, node_ref(ln, t[1])?, node_ref(ln, t[2])?],
            label,
        });
    }
    if let Some((l, _)) = lines.next_content() {
        return Err(Error::parse(context, l, "unexpected content after BFACES section"));
    }

    LabeledMesh::with_ids(nodes, node_ids, elements, element_ids, labels, faces, opts)
}
