//! Numerical laboratory for Neumann spectra on cusped domains and the
//! rotationally invariant cusp manifold.

pub mod linalg;
pub mod geometry;
pub mod fem;
pub mod manifold;
pub mod bounds;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
