//! TOML run configuration.
//!
//! ```toml
//! [regions.entorhinal]      # any of the twelve default names, or a new name with label + tissue
//! gc = -8.0e-3              # 1/year
//!
//! [bio]
//! d_axn = 40.0              # mm²/year
//!
//! [seeds]
//! preset = "C"              # optional subject preset; explicit tables below replace it per species
//! [seeds.tau]
//! entorhinal = 0.4
//!
//! [solver]
//! dt = 0.05                 # years
//! ```
//!
//! Entries under `[regions]` override or extend the twelve default regions; omitted fields of a
//! default-named region keep its table values.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meshio::{RegionSet, TissueClass, VolumeGroup};

use super::{default_regions, BioParams, RegionParams, SeedSpec, SolverSettings};

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    regions: Option<BTreeMap<String, RegionEntry>>,
    #[serde(default)]
    bio: BioParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seeds: Option<SeedsEntry>,
    #[serde(default)]
    solver: SolverSettings,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tissue: Option<TissueClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    volume_group: Option<VolumeGroup>,
    /// kPa
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    /// kPa
    #[serde(skip_serializing_if = "Option::is_none")]
    shear_g: Option<f64>,
    /// 1/year
    #[serde(skip_serializing_if = "Option::is_none")]
    g0: Option<f64>,
    /// 1/year
    #[serde(skip_serializing_if = "Option::is_none")]
    gc: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedsEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abeta: Option<BTreeMap<String, f64>>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Sorted by name.
    pub regions: Vec<RegionParams>,
    pub bio: BioParams,
    pub seeds: SeedSpec,
    pub solver: SolverSettings,
}

impl Default for Config {
    fn default() -> Self {
        let mut regions = default_regions();
        regions.sort_by(|a, b| a.name.cmp(&b.name));
        Config {
            regions,
            bio: BioParams::default(),
            seeds: SeedSpec::standard(),
            solver: SolverSettings::default(),
        }
    }
}

impl Config {
    pub fn region_set(&self) -> RegionSet {
        RegionSet::new(self.regions.iter().map(RegionParams::info).collect()).expect("validated on construction")
    }

    pub fn region_by_label(&self, label: u32) -> Option<&RegionParams> {
        self.regions.iter().find(|r| r.label == label)
    }

    pub fn region_by_name(&self, name: &str) -> Option<&RegionParams> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let set = RegionSet::new(self.regions.iter().map(RegionParams::info).collect())?;
        for r in &self.regions {
            r.validate()?;
        }
        self.bio.validate()?;
        self.seeds.validate(&set)?;
        self.solver.validate()
    }

    /// Serializes every resolved value, so the output reloads to an identical `Config`.
    pub fn to_toml(&self) -> String {
        let file = ConfigFile {
            regions: Some(
                self.regions
                    .iter()
                    .map(|r| {
                        (
                            r.name.clone(),
                            RegionEntry {
                                label: Some(r.label),
                                tissue: Some(r.tissue),
                                volume_group: Some(r.group),
                                lambda: Some(r.lambda),
                                shear_g: Some(r.shear_g),
                                g0: Some(r.g0),
                                gc: Some(r.gc),
                            },
                        )
                    })
                    .collect(),
            ),
            bio: self.bio.clone(),
            seeds: Some(SeedsEntry {
                preset: None,
                tau: Some(self.seeds.tau.clone()),
                abeta: Some(self.seeds.abeta.clone()),
            }),
            solver: self.solver.clone(),
        };
        toml::to_string(&file).expect("config serializes")
    }
}

fn resolve_region(name: &str, e: RegionEntry) -> Result<RegionParams> {
    let mut r = match RegionParams::anatomical(name) {
        Some(base) => {
            let tissue = e.tissue.unwrap_or(base.tissue);
            if tissue != base.tissue {
                RegionParams::for_class(e.label.unwrap_or(base.label), name, tissue)
            } else {
                base
            }
        }
        None => {
            let (Some(label), Some(tissue)) = (e.label, e.tissue) else {
                return Err(Error::Config(format!(
                    "unknown region `{name}`: new regions need both `label` and `tissue`"
                )));
            };
            RegionParams::for_class(label, name, tissue)
        }
    };
    if let Some(l) = e.label {
        r.label = l;
    }
    if let Some(g) = e.volume_group {
        r.group = g;
    }
    r.lambda = e.lambda.unwrap_or(r.lambda);
    r.shear_g = e.shear_g.unwrap_or(r.shear_g);
    r.g0 = e.g0.unwrap_or(r.g0);
    r.gc = e.gc.unwrap_or(r.gc);
    Ok(r)
}

fn resolve(file: ConfigFile) -> Result<Config> {
    let mut regions = default_regions();
    for (name, e) in file.regions.unwrap_or_default() {
        let r = resolve_region(&name, e)?;
        match regions.iter_mut().find(|d| d.name == name) {
            Some(d) => *d = r,
            None => regions.push(r),
        }
    }
    regions.sort_by(|a, b| a.name.cmp(&b.name));

    let seeds = match file.seeds {
        None => SeedSpec::standard(),
        Some(s) => {
            let mut base = match s.preset.as_deref() {
                None => SeedSpec::standard(),
                Some(p) => SeedSpec::subject(p)
                    .ok_or_else(|| Error::Config(format!("unknown seed preset `{p}` (expected C or D)")))?,
            };
            if let Some(t) = s.tau {
                base.tau = t;
            }
            if let Some(a) = s.abeta {
                base.abeta = a;
            }
            base
        }
    };

    let config = Config {
        regions,
        bio: file.bio,
        seeds,
        solver: file.solver,
    };
    config.validate()?;
    Ok(config)
}

/// Parses and validates a configuration. `context` names the source in error messages.
pub fn parse_config(text: &str, context: &str) -> Result<Config> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
        Error::parse(context, line, e.message().to_string())
    })?;
    resolve(file)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}
