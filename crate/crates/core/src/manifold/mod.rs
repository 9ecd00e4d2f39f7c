//! The rotationally invariant surface (2π, ∞) × S¹ with metric g(u)(du² + dθ²),
//! g(u) = u⁻²(log u)^(−α), and its radial Sturm–Liouville reduction
//! −f″ + n²f = λ g f.

mod endpoint;
mod geometry;
mod radial;
mod trace;

use thiserror::Error;

use crate::linalg::{LinalgError, QuadratureError};

pub use endpoint::{endpoint_classify, Candidate, CandidateReport, EndpointReport, Verdict};
pub use geometry::{
    ball_volume, cusp_distance, cusp_distance_quad, embed_r3, embedding_cloud, metric_derivative,
    metric_eval, write_embedding_csv, BallVolume, EmbeddedPoint,
};
pub use radial::{
    default_grid_size, hardy_manifold_constant, hardy_manifold_sweep, hardy_test_quotient,
    radial_discretize, solve_radial, Boundary, ManifoldModel, RadialPencil, RadialSpectrum,
};
pub use trace::{supnorm_trace, transformed_residual, GrowthFit, RadialEigenSolution, TraceOptions, TraceRow};

/// Left end of the radial interval.
pub const U_MIN: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("embedding condition |g'| < 2g fails at u = {u} (|g'|/2g = {ratio})")]
    Embedding { u: f64, ratio: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<csv::Error> for ManifoldError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<std::io::Error> for ManifoldError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
