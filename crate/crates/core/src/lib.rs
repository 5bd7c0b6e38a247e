//! Localized orthogonal decomposition (LOD) for the Gross-Pitaevskii equation.
//!
//! The crate builds multiscale LOD spaces on structured simplicial meshes,
//! precomputes the cubic nonlinearity as a sparse symmetric three-tensor and
//! uses it for ground-state computation and for continuous Galerkin time
//! stepping of the time-dependent equation.

pub mod bench;
pub mod dynamics;
pub mod error;
pub mod fem;
pub mod groundstate;
pub mod linalg;
pub mod lod;
pub mod mesh;
pub mod tritensor;

pub use error::{Error, Result};
