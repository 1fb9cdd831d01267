//! Legacy ASCII VTK unstructured-grid snapshots.
//!
//! Floats are written in shortest round-trip form so a re-read reproduces every field bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::coupler::SimState;
use crate::error::{Error, Result};
use crate::fe::Vec3;

use super::mesh::LabeledMesh;

const VTK_TETRA: u32 = 10;

/// Contents of a snapshot file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub points: Vec<Vec3>,
    pub cells: Vec<[usize; 4]>,
    pub point_scalars: BTreeMap<String, Vec<f64>>,
    pub point_vectors: BTreeMap<String, Vec<Vec3>>,
    pub cell_scalars: BTreeMap<String, Vec<f64>>,
}

impl Snapshot {
    /// Snapshot of `state` on `mesh`: nodal `c_tau`, `c_abeta`, `u_mag`, vector `u`, and
    /// elemental `theta` plus `region`.
    pub fn from_state(state: &SimState, mesh: &LabeledMesh) -> Self {
        let mut s = Snapshot {
            time: state.time,
            points: mesh.nodes().to_vec(),
            cells: mesh.elements().to_vec(),
            ..Default::default()
        };
        s.point_scalars.insert("c_tau".into(), state.c_tau.clone());
        s.point_scalars.insert("c_abeta".into(), state.c_abeta.clone());
        s.point_scalars
            .insert("u_mag".into(), state.displacement.iter().map(|u| u.norm()).collect());
        s.point_vectors.insert("u".into(), state.displacement.clone());
        s.cell_scalars.insert("theta".into(), state.theta.clone());
        s.cell_scalars.insert(
            "region".into(),
            mesh.region_labels().iter().map(|&l| f64::from(l)).collect(),
        );
        s
    }

    pub fn to_vtk_string(&self) -> String {
        let mut s = String::with_capacity(64 * (self.points.len() * 6 + self.cells.len() * 3));
        let w = &mut s;
        writeln!(w, "# vtk DataFile Version 3.0").unwrap();
        writeln!(w, "brainfem snapshot time_years={:e}", self.time).unwrap();
        writeln!(w, "ASCII").unwrap();
        writeln!(w, "DATASET UNSTRUCTURED_GRID").unwrap();
        writeln!(w, "POINTS {} double", self.points.len()).unwrap();
        for p in &self.points {
            writeln!(w, "{:e} {:e} {:e}", p.x, p.y, p.z).unwrap();
        }
        writeln!(w, "CELLS {} {}", self.cells.len(), self.cells.len() * 5).unwrap();
        for c in &self.cells {
            writeln!(w, "4 {} {} {} {}", c[0], c[1], c[2], c[3]).unwrap();
        }
        writeln!(w, "CELL_TYPES {}", self.cells.len()).unwrap();
        for _ in &self.cells {
            writeln!(w, "{VTK_TETRA}").unwrap();
        }
        writeln!(w, "POINT_DATA {}", self.points.len()).unwrap();
        for (name, vals) in &self.point_scalars {
            write_scalars(w, name, vals);
        }
        for (name, vals) in &self.point_vectors {
            writeln!(w, "VECTORS {name} double").unwrap();
            for v in vals {
                writeln!(w, "{:e} {:e} {:e}", v.x, v.y, v.z).unwrap();
            }
        }
        writeln!(w, "CELL_DATA {}", self.cells.len()).unwrap();
        for (name, vals) in &self.cell_scalars {
            write_scalars(w, name, vals);
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_vtk_string()).map_err(|e| Error::io(path, e))
    }
}

fn write_scalars(w: &mut String, name: &str, vals: &[f64]) {
    writeln!(w, "SCALARS {name} double 1").unwrap();
    writeln!(w, "LOOKUP_TABLE default").unwrap();
    for v in vals {
        writeln!(w, "{v:e}").unwrap();
    }
}

/// Writes `state` as a legacy VTK file.
pub fn write_snapshot(state: &SimState, mesh: &LabeledMesh, path: impl AsRef<Path>) -> Result<()> {
    Snapshot::from_state(state, mesh).write(path)
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Snapshot> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_snapshot(&text, &path.display().to_string())
}

struct Tokens<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    ctx: &'a str,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn next_line(&mut self) -> Option<&'a str> {
        for (i, l) in self.lines.by_ref() {
            if !l.trim().is_empty() {
                self.line = i + 1;
                return Some(l.trim());
            }
        }
        None
    }

    fn require(&mut self, what: &str) -> Result<&'a str> {
        let last = self.line;
        self.next_line()
            .ok_or_else(|| Error::parse(self.ctx, last + 1, format!("unexpected end of file, expected {what}")))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.ctx, self.line, msg)
    }

    fn numbers<T: std::str::FromStr>(&mut self, count: usize, what: &str) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let line = self.require(what)?;
            for t in line.split_whitespace() {
                out.push(t.parse().map_err(|_| self.err(format!("invalid {what} value `{t}`")))?);
            }
        }
        if out.len() != count {
            return Err(self.err(format!("too many {what} values")));
        }
        Ok(out)
    }
}

pub fn parse_snapshot(text: &str, ctx: &str) -> Result<Snapshot> {
    let mut t = Tokens {
        lines: text.lines().enumerate().peekable(),
        ctx,
        line: 0,
    };
    if !t.require("VTK header")?.starts_with("# vtk DataFile") {
        return Err(t.err("not a legacy VTK file"));
    }
    let title = t.require("title")?;
    let time = title
        .split_whitespace()
        .find_map(|w| w.strip_prefix("time_years="))
        .map(|v| v.parse::<f64>().map_err(|_| t.err("invalid time in title")))
        .transpose()?
        .unwrap_or(0.0);
    if t.require("ASCII")? != "ASCII" {
        return Err(t.err("only ASCII files are supported"));
    }
    if t.require("DATASET")? != "DATASET UNSTRUCTURED_GRID" {
        return Err(t.err("expected DATASET UNSTRUCTURED_GRID"));
    }

    let mut snap = Snapshot {
        time,
        ..Default::default()
    };
    #[derive(PartialEq)]
    enum Section {
        None,
        Point,
        Cell,
    }
    let mut section = Section::None;
    while let Some(line) = t.next_line() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["POINTS", n, _] => {
                let n: usize = n.parse().map_err(|_| t.err("bad POINTS count"))?;
                let v: Vec<f64> = t.numbers(3 * n, "point")?;
                snap.points = v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
            }
            ["CELLS", n, size] => {
                let n: usize = n.parse().map_err(|_| t.err("bad CELLS count"))?;
                let size: usize = size.parse().map_err(|_| t.err("bad CELLS size"))?;
                if size != 5 * n {
                    return Err(t.err("only tetrahedral cells are supported"));
                }
                let v: Vec<usize> = t.numbers(size, "cell")?;
                snap.cells = v
                    .chunks_exact(5)
                    .map(|c| {
                        if c[0] == 4 {
                            Ok([c[1], c[2], c[3], c[4]])
                        } else {
                            Err(t.err("non-tetrahedral cell"))
                        }
                    })
                    .collect::<Result<_>>()?;
            }
            ["CELL_TYPES", n] => {
                let n: usize = n.parse().map_err(|_| t.err("bad CELL_TYPES count"))?;
                let types: Vec<u32> = t.numbers(n, "cell type")?;
                if types.iter().any(|&ty| ty != VTK_TETRA) {
                    return Err(t.err("only VTK_TETRA cells are supported"));
                }
            }
            ["POINT_DATA", _] => section = Section::Point,
            ["CELL_DATA", _] => section = Section::Cell,
            ["SCALARS", name, _, rest @ ..] => {
                if !rest.is_empty() && rest != ["1"] {
                    return Err(t.err("only single-component scalars are supported"));
                }
                if t.require("LOOKUP_TABLE")?.split_whitespace().next() != Some("LOOKUP_TABLE") {
                    return Err(t.err("expected LOOKUP_TABLE"));
                }
                let (n, map) = match section {
                    Section::Point => (snap.points.len(), &mut snap.point_scalars),
                    Section::Cell => (snap.cells.len(), &mut snap.cell_scalars),
                    Section::None => return Err(t.err("SCALARS outside a data section")),
                };
                let vals = t.numbers(n, "scalar")?;
                map.insert((*name).to_string(), vals);
            }
            ["VECTORS", name, _] => {
                if section != Section::Point {
                    return Err(t.err("cell vectors are not supported"));
                }
                let v: Vec<f64> = t.numbers(3 * snap.points.len(), "vector")?;
                snap.point_vectors.insert(
                    (*name).to_string(),
                    v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
                );
            }
            _ => return Err(t.err(format!("unrecognized line `{line}`"))),
        }
    }
    Ok(snap)
}

/// Field-wise differences between two snapshots with identical topology.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDiff {
    pub name: String,
    pub max_abs: f64,
    pub max_rel: f64,
    pub rms: f64,
}

/// Compares every field present in both snapshots. Errors if topology differs.
pub fn diff_snapshots(a: &Snapshot, b: &Snapshot) -> Result<Vec<FieldDiff>> {
    if a.points.len() != b.points.len() || a.cells != b.cells {
        return Err(Error::validation("snapshots have different topology", vec![]));
    }
    let mut out = Vec::new();
    let mut push = |name: String, pairs: Vec<(f64, f64)>| {
        let mut d = FieldDiff {
            name,
            max_abs: 0.0,
            max_rel: 0.0,
            rms: 0.0,
        };
        for &(x, y) in &pairs {
            let e = (x - y).abs();
            d.max_abs = d.max_abs.max(e);
            let scale = x.abs().max(y.abs());
            if scale > 0.0 {
                d.max_rel = d.max_rel.max(e / scale);
            }
            d.rms += e * e;
        }
        d.rms = (d.rms / pairs.len().max(1) as f64).sqrt();
        out.push(d);
    };
    for (name, va) in &a.point_scalars {
        if let Some(vb) = b.point_scalars.get(name) {
            push(
                format!("point:{name}"),
                va.iter().copied().zip(vb.iter().copied()).collect(),
            );
        }
    }
    for (name, va) in &a.point_vectors {
        if let Some(vb) = b.point_vectors.get(name) {
            push(
                format!("point:{name}"),
                va.iter()
                    .zip(vb)
                    .flat_map(|(x, y)| (0..3).map(move |k| (x[k], y[k])))
                    .collect(),
            );
        }
    }
    for (name, va) in &a.cell_scalars {
        if let Some(vb) = b.cell_scalars.get(name) {
            push(
                format!("cell:{name}"),
                va.iter().copied().zip(vb.iter().copied()).collect(),
            );
        }
    }
    Ok(out)
}
