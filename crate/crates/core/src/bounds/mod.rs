//! Spectral bound estimators: eigenvalue-growth and sup-norm fits, heat-kernel
//! series with certified tails, ultracontractivity fits, and log-Sobolev /
//! log-Hardy deficit functionals.
//!
//! Every "constant" produced here is a best fit with a zero-violation
//! certificate on the data window, not a proof.

mod deficit;
mod fits;
mod kernel;

use thiserror::Error;

use crate::fem::FemError;
use crate::linalg::{LinalgError, QuadratureError};

pub use deficit::{
    default_trial_family, eta_lower_bound, lemma_eps_check, lsi_deficit, DeficitCurve, DiscreteSpace, LemmaEpsReport,
    TrialFamilyOptions, TrialFunction,
};
pub use fits::{eigen_growth_fit, supnorm_bound_fit, supnorm_violations, BoundFit, GrowthLaw};
pub use kernel::{
    estbasic_c10, estbasic_check, heat_kernel_diag, two_to_inf_search, ultracontractivity_fit, EstbasicReport,
    HeatKernelSample, KernelPoint, KernelSup, TailModel, UltracontractivityReport,
};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series tail bound {bound:e} exceeds 1e-6 of the value {value:e} with {available} pairs; about {required} pairs are needed")]
    TailUncertified { available: usize, required: usize, bound: f64, value: f64 },
    #[error("trial function has negative entry {value} at node {node}")]
    NegativeFunction { node: usize, value: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<csv::Error> for BoundsError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<std::io::Error> for BoundsError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// Ordinary least squares y ≈ a + b x; returns (a, b, sum of squared residuals).
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let sse = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    (a, b, sse)
}

/// Minimizes `f` over [lo, hi]: a uniform scan followed by golden-section
/// refinement around the best scan point.
pub(crate) fn minimize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const SCAN: usize = 400;
    let step = (hi - lo) / SCAN as f64;
    let best = (0..=SCAN)
        .map(|i| lo + step * i as f64)
        .map(|x| (x, f(x)))
        .fold((lo, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
        .0;
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
