//! Reference grain geometry, its voxelization, and the ε-periodic perforated domains built from it.

mod domain;
mod raster;
mod shape;

pub use domain::{
    build_layered_domain, build_perforated_domain, DomainExtent, DomainLabels, InterfaceFace, Material,
};
pub use raster::{rasterize, BoundaryFace, FaceKind, RasterMask};
pub use shape::{exact_measures, CellShape, GeometryMeasures, ShapeKind};
