//! Cusp profiles, truncated cusp domains and boundary distances.

mod domain;
mod profile;

use thiserror::Error;

pub use domain::{
    lemma_ed_check, lower_bound_verbatim, lower_bound_repaired, CuspDomain, DistanceKind, DistanceSample,
    LemmaEdReport,
};
pub use profile::{modulus_check, profile_eval, CuspProfile, ModulusReport, ProfileForm, BASE_HALF_WIDTH};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("argument {r} outside the base interval [-1/2, 1/2]")]
    OutOfRange { r: f64 },
    #[error("point ({x}, {y}) is not interior to the domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error("domain is empty: w_min = {w_min} is not below {max_height}")]
    EmptyDomain { w_min: f64, max_height: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl GeometryError {
    pub(crate) fn from_csv(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}
