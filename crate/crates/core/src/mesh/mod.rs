//! Moving spatial meshes and their extrusion into space-time slabs.

pub mod io;
mod slab;
mod spatial;

pub use slab::{classify_facets, extrude_slab, Facet, FacetGeometry, FacetKind, FacetSide, SlabMesh, VOLUME_TOLERANCE};
pub use spatial::{
    move_mesh, signed_area, triangulate_unit_square, BoundaryEdge, BoundaryTag, DomainMotion, Edge, SinusoidalMotion,
    SpatialMesh, StaticMotion,
};
