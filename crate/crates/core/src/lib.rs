//! Full-order and reduced-order solvers for the two-component
//! FitzHugh-Nagumo reaction-diffusion system on the square.
//!
//! The full-order model discretizes the coupled activator/inhibitor system
//! with a symmetric interior penalty discontinuous Galerkin (SIPG) method in
//! space and backward Euler with Newton in time. Reduced-order models are
//! built by proper orthogonal decomposition (POD) in the mass-matrix inner
//! product, optionally with discrete empirical interpolation (DEIM) so the
//! online cost of the cubic nonlinearity no longer scales with the mesh.
//!
//! Modules mirror the pipeline: [`mesh`] and [`space`] define the
//! discretization, [`assembly`] builds the operators, [`fom`] integrates the
//! full system and emits snapshots, [`pod`] and [`deim`] construct the
//! reduced operators, [`rom`] integrates the reduced system, and [`harness`]
//! orchestrates benchmark experiments end to end.

pub mod assembly;
pub mod basis;
pub mod block;
pub mod deim;
pub mod error;
pub mod fom;
pub mod harness;
pub mod io;
pub mod mesh;
pub mod numerics;
pub mod pod;
pub mod rom;
pub mod space;

pub use block::BlockSparseMatrix;
pub use error::{Error, Result};
pub use mesh::{build_square_mesh, Mesh};
pub use space::DGSpace;
