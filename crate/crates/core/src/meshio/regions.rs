use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constitutive class of a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TissueClass {
    Grey,
    White,
    Fluid,
}

impl TissueClass {
    pub fn is_tissue(self) -> bool {
        !matches!(self, TissueClass::Fluid)
    }
}

impl fmt::Display for TissueClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TissueClass::Grey => "grey",
            TissueClass::White => "white",
            TissueClass::Fluid => "fluid",
        })
    }
}

impl FromStr for TissueClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grey" => Ok(TissueClass::Grey),
            "white" => Ok(TissueClass::White),
            "fluid" => Ok(TissueClass::Fluid),
            other => Err(Error::Config(format!("unknown tissue class `{other}`"))),
        }
    }
}

/// Grouping used by the volume-fraction observables.
///
/// CSF is excluded from the reference total; ventricles are reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeGroup {
    Grey,
    White,
    Ventricle,
    Excluded,
}

impl VolumeGroup {
    pub fn default_for(tissue: TissueClass) -> Self {
        match tissue {
            TissueClass::Grey => VolumeGroup::Grey,
            TissueClass::White => VolumeGroup::White,
            TissueClass::Fluid => VolumeGroup::Ventricle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionInfo {
    pub label: u32,
    pub name: String,
    pub tissue: TissueClass,
    pub group: VolumeGroup,
}

/// Mapping from integer region labels to named regions. Stored sorted by name, which is
/// also the column order of every per-region output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionSet {
    regions: Vec<RegionInfo>,
    by_label: HashMap<u32, usize>,
}

impl RegionSet {
    pub fn new(mut regions: Vec<RegionInfo>) -> Result<Self> {
        regions.sort_by(|a, b| a.name.cmp(&b.name));
        let mut by_label = HashMap::with_capacity(regions.len());
        for (i, r) in regions.iter().enumerate() {
            if by_label.insert(r.label, i).is_some() {
                return Err(Error::Config(format!("duplicate region label {}", r.label)));
            }
        }
        for w in regions.windows(2) {
            if w[0].name == w[1].name {
                return Err(Error::Config(format!("duplicate region name `{}`", w[0].name)));
            }
        }
        Ok(RegionSet { regions, by_label })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RegionInfo> {
        self.regions.iter()
    }

    /// Position of `label` in name order.
    pub fn index_of_label(&self, label: u32) -> Option<usize> {
        self.by_label.get(&label).copied()
    }

    pub fn by_label(&self, label: u32) -> Option<&RegionInfo> {
        self.index_of_label(label).map(|i| &self.regions[i])
    }

    pub fn by_name(&self, name: &str) -> Option<&RegionInfo> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn get(&self, index: usize) -> &RegionInfo {
        &self.regions[index]
    }
}

/// Integer labels of the twelve anatomical domains used by the default region set.
pub mod labels {
    pub const VENTRICLES: u32 = 1;
    pub const CSF: u32 = 2;
    pub const AMYGDALA: u32 = 3;
    pub const HIPPOCAMPUS: u32 = 4;
    pub const THALAMUS: u32 = 5;
    pub const ENTORHINAL: u32 = 6;
    pub const CEREBRAL_CORTEX: u32 = 7;
    pub const CEREBELLUM_CORTEX: u32 = 8;
    pub const CEREBELLUM_WM: u32 = 9;
    pub const BRAINSTEM: u32 = 10;
    pub const WHITE_MATTER: u32 = 11;
    pub const CORPUS_CALLOSUM: u32 = 12;
}
