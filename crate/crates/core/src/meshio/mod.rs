//! Mesh, axonal-field and snapshot input/output.

mod axonal;
mod mesh;
mod regions;
pub mod synthetic;
mod vtk;

pub use axonal::{
    map_axonal_field, parse_axonal_entries, read_axonal_entries, read_axonal_field, AxonalEntries, AxonalEntry,
    AxonalField,
};
pub use mesh::{
    parse_mesh, read_mesh, read_mesh_with, BoundaryFace, FaceLabel, LabeledMesh, ReadOptions, VOLUME_EPSILON,
};
pub use regions::{labels, RegionInfo, RegionSet, TissueClass, VolumeGroup};
pub use vtk::{diff_snapshots, parse_snapshot, read_snapshot, write_snapshot, FieldDiff, Snapshot};
