//! Nodal axonal orientation field.
//!
//! Input is a plain list of `x y z ax ay az` entries. Each white-matter node takes the direction
//! of its nearest entry (lowest entry index on ties); other nodes carry no direction.

use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fe::Vec3;

use super::mesh::LabeledMesh;
use super::regions::{RegionSet, TissueClass};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxonalEntry {
    pub position: Vec3,
    /// Unit vector.
    pub direction: Vec3,
}

/// Parsed entries of an axonal orientation file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AxonalEntries {
    pub entries: Vec<AxonalEntry>,
    /// Lines whose vector had zero (or non-finite) norm.
    pub skipped_zero: usize,
}

impl AxonalEntries {
    pub fn from_entries(raw: impl IntoIterator<Item = (Vec3, Vec3)>) -> Self {
        let mut out = AxonalEntries::default();
        for (position, v) in raw {
            out.push(position, v);
        }
        out
    }

    fn push(&mut self, position: Vec3, v: Vec3) {
        let n = v.norm();
        if n > 0.0 && n.is_finite() {
            self.entries.push(AxonalEntry {
                position,
                direction: v / n,
            });
        } else {
            self.skipped_zero += 1;
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.entries.len() * 64);
        for e in &self.entries {
            let (p, d) = (e.position, e.direction);
            s.push_str(&format!(
                "{:e} {:e} {:e} {:e} {:e} {:e}\n",
                p.x, p.y, p.z, d.x, d.y, d.z
            ));
        }
        s
    }
}

pub fn parse_axonal_entries(text: &str, context: &str) -> Result<AxonalEntries> {
    let mut out = AxonalEntries::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(context, i + 1, format!("invalid number `{t}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != 6 {
            return Err(Error::parse(
                context,
                i + 1,
                format!("axonal entry needs 6 values, found {}", vals.len()),
            ));
        }
        out.push(
            Vec3::new(vals[0], vals[1], vals[2]),
            Vec3::new(vals[3], vals[4], vals[5]),
        );
    }
    if out.skipped_zero > 0 {
        warn!("{context}: skipped {} zero-norm axonal entries", out.skipped_zero);
    }
    Ok(out)
}

pub fn read_axonal_entries(path: impl AsRef<Path>) -> Result<AxonalEntries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_axonal_entries(&text, &path.display().to_string())
}

/// One resolved direction per mesh node; `None` outside white matter.
#[derive(Debug, Clone, PartialEq)]
pub struct AxonalField {
    directions: Vec<Option<Vec3>>,
    skipped_zero: usize,
}

impl AxonalField {
    /// Wraps nodal directions, normalizing every present vector.
    pub fn from_nodal(directions: Vec<Option<Vec3>>) -> Result<Self> {
        let directions = directions
            .into_iter()
            .enumerate()
            .map(|(i, d)| match d {
                None => Ok(None),
                Some(v) if v.norm() > 0.0 && v.norm().is_finite() => Ok(Some(v.normalize())),
                Some(_) => Err(Error::validation(format!("node {i} has a zero axonal vector"), vec![i])),
            })
            .collect::<Result<_>>()?;
        Ok(AxonalField {
            directions,
            skipped_zero: 0,
        })
    }

    /// Same direction on every white-matter node.
    pub fn uniform(mesh: &LabeledMesh, regions: &RegionSet, direction: Vec3) -> Result<Self> {
        let white = mesh.nodes_touching(regions, TissueClass::White);
        Self::from_nodal(white.into_iter().map(|w| w.then_some(direction)).collect())
    }

    pub fn direction(&self, node: usize) -> Option<Vec3> {
        self.directions[node]
    }

    pub fn directions(&self) -> &[Option<Vec3>] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn skipped_zero(&self) -> usize {
        self.skipped_zero
    }

    /// Fraction of white-matter nodes that carry a direction.
    pub fn white_coverage(&self, mesh: &LabeledMesh, regions: &RegionSet) -> f64 {
        let white = mesh.nodes_touching(regions, TissueClass::White);
        let total = white.iter().filter(|w| **w).count();
        if total == 0 {
            return 1.0;
        }
        let covered = white
            .iter()
            .zip(&self.directions)
            .filter(|(w, d)| **w && d.is_some())
            .count();
        covered as f64 / total as f64
    }
}

/// Uniform bucket grid for exact nearest-entry queries.
struct EntryGrid<'a> {
    entries: &'a [AxonalEntry],
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl<'a> EntryGrid<'a> {
    fn new(entries: &'a [AxonalEntry]) -> Self {
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for e in entries {
            lo = lo.inf(&e.position);
            hi = hi.sup(&e.position);
        }
        let extent = (hi - lo).map(|x| x.max(1e-9));
        // About two entries per occupied cell for a volume-filling cloud.
        let cell = (extent.x * extent.y * extent.z / (entries.len() as f64 / 2.0).max(1.0))
            .cbrt()
            .max(extent.max() / 256.0)
            .max(1e-9);
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor() as usize + 1).max(1));
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let mut grid = EntryGrid {
            entries,
            origin: lo,
            cell,
            dims,
            buckets: Vec::new(),
        };
        for (i, e) in entries.iter().enumerate() {
            let c = grid.cell_of(&e.position);
            buckets[grid.flat(c)].push(i as u32);
        }
        grid.buckets = buckets;
        grid
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let f = ((p[a] - self.origin[a]) / self.cell).floor();
            (f.max(0.0) as usize).min(self.dims[a] - 1)
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Returns `(entry index, distance)`; ties resolve to the lowest index.
    fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.entries.is_empty() {
            return None;
        }
        let c = self.cell_of(q);
        let mut best: Option<(f64, usize)> = None;
        let mut r = 0usize;
        loop {
            let lo = c.map(|x| x.saturating_sub(r));
            let hi = [0, 1, 2].map(|a| (c[a] + r).min(self.dims[a] - 1));
            for k in lo[2]..=hi[2] {
                for j in lo[1]..=hi[1] {
                    for i in lo[0]..=hi[0] {
                        let on_shell = [i, j, k].iter().zip(c).any(|(&x, cx)| x.abs_diff(cx) == r);
                        if !on_shell {
                            continue;
                        }
                        for &idx in &self.buckets[self.flat([i, j, k])] {
                            let d2 = (self.entries[idx as usize].position - q).norm_squared();
                            let cand = (d2, idx as usize);
                            if best.is_none_or(|b| cand < b) {
                                best = Some(cand);
                            }
                        }
                    }
                }
            }
            // Distance from q to the nearest unsearched cell.
            let mut bound = f64::INFINITY;
            for a in 0..3 {
                if lo[a] > 0 {
                    let face = self.origin[a] + lo[a] as f64 * self.cell;
                    bound = bound.min((q[a] - face).max(0.0));
                }
                if hi[a] + 1 < self.dims[a] {
                    let face = self.origin[a] + (hi[a] + 1) as f64 * self.cell;
                    bound = bound.min((face - q[a]).max(0.0));
                }
            }
            match best {
                Some((d2, idx)) if d2.sqrt() < bound || bound.is_infinite() => return Some((idx, d2.sqrt())),
                None if bound.is_infinite() => return None,
                _ => r += 1,
            }
        }
    }
}

/// Assigns each white-matter node the direction of its nearest entry.
///
/// Fails when a white node has no entry within `max_radius` (mm).
pub fn map_axonal_field(
    entries: &AxonalEntries,
    mesh: &LabeledMesh,
    regions: &RegionSet,
    max_radius: f64,
) -> Result<AxonalField> {
    let white = mesh.nodes_touching(regions, TissueClass::White);
    let grid = EntryGrid::new(&entries.entries);
    let found: Vec<Option<Option<Vec3>>> = mesh
        .nodes()
        .par_iter()
        .zip(white.par_iter())
        .map(|(p, &is_white)| {
            if !is_white {
                return Some(None);
            }
            match grid.nearest(p) {
                Some((idx, d)) if d <= max_radius => Some(Some(entries.entries[idx].direction)),
                _ => None,
            }
        })
        .collect();

    let missing: Vec<usize> = found
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_none())
        .map(|(i, _)| mesh.node_ids()[i] as usize)
        .collect();
    if !missing.is_empty() {
        let shown: Vec<usize> = missing.iter().take(20).copied().collect();
        return Err(Error::validation(
            format!(
                "{} white-matter nodes have no axonal entry within {max_radius} mm (node ids {shown:?}{})",
                missing.len(),
                if missing.len() > shown.len() { ", ..." } else { "" }
            ),
            missing,
        ));
    }
    Ok(AxonalField {
        directions: found.into_iter().map(|f| f.flatten()).collect(),
        skipped_zero: entries.skipped_zero,
    })
}

pub fn read_axonal_field(
    path: impl AsRef<Path>,
    mesh: &LabeledMesh,
    regions: &RegionSet,
    max_radius: f64,
) -> Result<AxonalField> {
    map_axonal_field(&read_axonal_entries(path)?, mesh, regions, max_radius)
}
