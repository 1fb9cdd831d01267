use std::fmt::Write as _;

use crate::fe::signed_volume;
use crate::meshio::{LabeledMesh, RegionSet, VolumeGroup};

use super::SimState;

/// Column layout of the observables table: one block per region present in the mesh, in
/// region-name order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableLayout {
    pub regions: Vec<String>,
    labels: Vec<u32>,
    groups: Vec<VolumeGroup>,
    reference: f64,
}

/// One row of the observables table.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableRow {
    pub time: f64,
    pub grey_frac_pct: f64,
    pub white_frac_pct: f64,
    pub ventricle_frac_pct: f64,
    /// Volume-weighted mean concentrations and minimum ϑ, one entry per layout region.
    pub mean_ctau: Vec<f64>,
    pub mean_cabeta: Vec<f64>,
    pub min_theta: Vec<f64>,
}

/// Undeformed grey + white + ventricle volume.
pub fn reference_volume(mesh: &LabeledMesh, regions: &RegionSet) -> f64 {
    (0..mesh.element_count())
        .filter(|&e| {
            regions
                .by_label(mesh.region_labels()[e])
                .is_some_and(|r| r.group != VolumeGroup::Excluded)
        })
        .map(|e| mesh.element_volume(e))
        .sum()
}

impl ObservableLayout {
    pub fn new(mesh: &LabeledMesh, regions: &RegionSet) -> Self {
        let present: std::collections::BTreeSet<u32> = mesh.region_labels().iter().copied().collect();
        let listed: Vec<_> = regions.iter().filter(|r| present.contains(&r.label)).collect();
        ObservableLayout {
            regions: listed.iter().map(|r| r.name.clone()).collect(),
            labels: listed.iter().map(|r| r.label).collect(),
            groups: listed.iter().map(|r| r.group).collect(),
            reference: reference_volume(mesh, regions),
        }
    }

    pub fn header(&self) -> String {
        let mut h = String::from("time_years,grey_frac_pct,white_frac_pct,ventricle_frac_pct");
        for prefix in ["mean_ctau", "mean_cabeta", "min_theta"] {
            for r in &self.regions {
                write!(h, ",{prefix}_{r}").unwrap();
            }
        }
        h
    }

    /// Measures `state`. Volumes use the deformed coordinates X + u.
    pub fn measure(&self, state: &SimState, mesh: &LabeledMesh) -> ObservableRow {
        let k = self.regions.len();
        let mut volume = vec![0.0; k];
        let mut tau = vec![0.0; k];
        let mut abeta = vec![0.0; k];
        let mut min_theta = vec![f64::INFINITY; k];
        for (e, t) in mesh.elements().iter().enumerate() {
            let Some(r) = self.labels.iter().position(|&l| l == mesh.region_labels()[e]) else {
                continue;
            };
            let x = t.map(|v| mesh.nodes()[v] + state.displacement[v]);
            let v = signed_volume(&x);
            volume[r] += v;
            tau[r] += v * t.iter().map(|&n| state.c_tau[n]).sum::<f64>() / 4.0;
            abeta[r] += v * t.iter().map(|&n| state.c_abeta[n]).sum::<f64>() / 4.0;
            min_theta[r] = min_theta[r].min(state.theta[e]);
        }
        let group_pct = |g: VolumeGroup| {
            let total: f64 = (0..k).filter(|&r| self.groups[r] == g).map(|r| volume[r]).sum();
            100.0 * total / self.reference
        };
        let mean = |sum: &[f64]| -> Vec<f64> {
            sum.iter()
                .zip(&volume)
                .map(|(s, v)| if *v > 0.0 { s / v } else { 0.0 })
                .collect()
        };
        ObservableRow {
            time: state.time,
            grey_frac_pct: group_pct(VolumeGroup::Grey),
            white_frac_pct: group_pct(VolumeGroup::White),
            ventricle_frac_pct: group_pct(VolumeGroup::Ventricle),
            mean_ctau: mean(&tau),
            mean_cabeta: mean(&abeta),
            min_theta,
        }
    }

    /// Index of `name` among the layout regions.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.regions.iter().position(|r| r == name)
    }
}

impl ObservableRow {
    /// CSV record in shortest round-trip float form.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "{},{},{},{}",
            self.time, self.grey_frac_pct, self.white_frac_pct, self.ventricle_frac_pct
        );
        for v in self.mean_ctau.iter().chain(&self.mean_cabeta).chain(&self.min_theta) {
            write!(s, ",{v}").unwrap();
        }
        s
    }

    /// Parses a record written by [`ObservableRow::to_csv`] for a layout with `regions` columns.
    pub fn from_csv(line: &str, regions: usize) -> Option<Self> {
        let vals: Vec<f64> = line.split(',').map(|t| t.trim().parse().ok()).collect::<Option<_>>()?;
        if vals.len() != 4 + 3 * regions {
            return None;
        }
        let block = |i: usize| vals[4 + i * regions..4 + (i + 1) * regions].to_vec();
        Some(ObservableRow {
            time: vals[0],
            grey_frac_pct: vals[1],
            white_frac_pct: vals[2],
            ventricle_frac_pct: vals[3],
            mean_ctau: block(0),
            mean_cabeta: block(1),
            min_theta: block(2),
        })
    }

    /// Every numeric value in column order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.time,
            self.grey_frac_pct,
            self.white_frac_pct,
            self.ventricle_frac_pct,
        ];
        v.extend(self.mean_ctau.iter().chain(&self.mean_cabeta).chain(&self.min_theta));
        v
    }
}

/// Observables of `state` with a layout built on the fly.
pub fn compute_observables(state: &SimState, mesh: &LabeledMesh, regions: &RegionSet) -> ObservableRow {
    ObservableLayout::new(mesh, regions).measure(state, mesh)
}
