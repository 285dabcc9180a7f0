//! Generalized multiscale finite elements for Stokes flow in perforated
//! domains, built on a hybridized discontinuous Galerkin coarse formulation.
//!
//! The pipeline runs in stages:
//!
//! 1. [`geometry`]: a fine triangulation fitted to circular perforations and a
//!    coarse partition (triangular or rectangular blocks).
//! 2. [`snapshots`]: local Stokes solves per coarse block driven by boundary
//!    data (deltas, oversampled deltas, or Gaussian noise).
//! 3. [`offline`]: a stiffness versus boundary-mass eigenproblem per block that
//!    selects the dominant snapshot modes.
//! 4. [`mssolver`]: the saddle-point system with element pressures and edge
//!    multipliers, in the reduced space or in the full fine DG space.
//! 5. [`analysis`]: error norms, mass-conservation audits and parameter studies.

pub mod analysis;
pub mod dgform;
pub mod error;
pub mod expr;
pub mod femcore;
pub mod geometry;
pub mod io;
pub mod mssolver;
pub mod offline;
pub mod problem;
pub mod snapshots;

pub use error::{Error, Result};
pub use geometry::{
    BlockShape, Circle, CoarsePartition, EdgeMarker, FineMesh, PerforationSet, Preset,
};
pub use dgform::{BlockBasis, BlockSpace, DgContext, DgLayout, DgOperators, HybridSystem};
pub use mssolver::HybridSolution;
pub use offline::{BlockOfflineBasis, SpectralVariant};
pub use problem::{OuterBoundary, ProblemData, SideCondition, VectorField};
pub use snapshots::{SnapshotMode, SnapshotSettings, SnapshotSpace};

/// A point in the plane.
pub type Point = [f64; 2];
