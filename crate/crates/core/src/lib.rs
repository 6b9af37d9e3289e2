//! Space-time hybridizable discontinuous Galerkin solver for the
//! incompressible Navier-Stokes equations on moving 2D domains.
//!
//! Each time slab is a tetrahedral mesh of `(t^n, t^{n+1}) x Omega(t)`.
//! Velocity and pressure live on the cells, their traces on the facets that
//! are not time levels. The cell unknowns are eliminated cell by cell, the
//! facet system is solved, and a Picard loop handles the convection. The
//! discrete velocity is exactly divergence-free and H(div)-conforming.
//!
//! Everything numerical is generic over [`Real`]; the aliases at the crate
//! root fix the scalar to `f64`.

// Index loops over parallel coefficient arrays read closer to the formulas,
// and `!(x > 0)` is used on purpose so that NaN is rejected.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod diagnostics;
pub mod dofs;
pub mod element;
pub mod error;
pub mod export;
pub mod forms;
pub mod linalg;
pub mod marching;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod scalar;
pub mod system;

pub use diagnostics::{CaseConfig, CaseName, DiagnosticsReport, RunReport};
pub use error::{Error, Result};
pub use scalar::Real;
pub use system::Transport;

pub type SpatialMesh = mesh::SpatialMesh<f64>;
pub type SlabMesh = mesh::SlabMesh<f64>;
pub type ReferenceElement = element::ReferenceElement<f64>;
pub type Discretization = system::Discretization<f64>;
pub type SlabSystem = system::SlabSystem<f64>;
pub type SlabState = system::SlabState<f64>;
pub type FacetSolver = system::FacetSolver<f64>;
pub type TraceField = marching::TraceField<f64>;
