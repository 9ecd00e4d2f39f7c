//! Graded meshes of truncated cusp domains, P1 assembly and 2-D Hardy constants.

mod assemble;
mod hardy;
mod mesh;

use thiserror::Error;

pub use assemble::{
    assemble, assemble_basic, integrate_nodal, weighted_mass_with, Forms, TriangleRule, WeightKind, WeightSpec,
    RULE_DEGREE2, RULE_DEGREE5,
};
pub use hardy::{hardy_constant_2d, HardyLevel, HardyParams, HardyReport};
pub use mesh::{build_graded_mesh, Grading, Mesh, MIN_ANGLE_DEG};

use crate::geometry::GeometryError;
use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("meshing failed: {0}")]
    Meshing(String),
    #[error("minimum angle {min_angle_deg:.2}° below 15° at ({}, {}) in grading layer {}", .at.0, .at.1, .layer.map_or("outside the graded zone".to_string(), |k| k.to_string()))]
    QualityUnattainable { layer: Option<usize>, min_angle_deg: f64, at: (f64, f64) },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<csv::Error> for FemError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}
