//! Sparse symmetric forms, envelope Cholesky, a shift-invert eigensolver,
//! adaptive quadrature and the on-disk eigenpair cache.

mod cache;
mod cholesky;
mod eigen;
mod quadrature;
mod sparse;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheEntryInfo, CacheError, EigenCache, VerifyOutcome, VerifyReport, CACHE_FORMAT_VERSION};
pub use cholesky::{reverse_cuthill_mckee, EnvelopeCholesky};
pub use eigen::{
    rayleigh_min, relative_residual, solve_generalized, EigenMeta, EigenOptions, EigenPairSet,
};
pub use quadrature::{
    adaptive_quad, double_exponential, gauss_legendre, Interval, Quadrature, QuadratureError,
    QuadratureResult,
};
pub use sparse::SparseSymmetricForm;


#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("form has dimension zero")]
    EmptyForm,
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("non-finite entry in row {row}")]
    NonFinite { row: usize },
    #[error("entry ({row}, {col}) has no symmetric partner of equal value")]
    NotSymmetric { row: usize, col: usize },
    #[error("malformed compressed-row data")]
    MalformedCsr,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("not a permutation")]
    InvalidPermutation,
    #[error("matrix not positive definite (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("mass form not positive definite (pivot {pivot}, value {value:e})")]
    MassNotPositiveDefinite { pivot: usize, value: f64 },
    #[error("shifted form A + {shift}B not positive definite (pivot {pivot}, value {value:e}); A is below -{shift} on some vector")]
    ShiftedNotPositiveDefinite { pivot: usize, value: f64, shift: f64 },
    #[error("cannot compute {k} eigenpairs of a dimension-{dim} pencil")]
    InvalidCount { k: usize, dim: usize },
    #[error("eigensolver did not converge: {converged}/{requested} pairs, best unconverged residual {best_residual:e}")]
    NoConvergence { best_residual: f64, converged: usize, requested: usize },
    #[error("eigenvalues are not in nondecreasing order")]
    UnsortedSpectrum,
}

/// Incremental SHA-256 over numeric data, used for problem and grid hashes.
#[derive(Clone, Default)]
pub struct ContentHasher(Sha256);

impl ContentHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u64(s.len() as u64).bytes(s.as_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.bytes(&v.to_bits().to_le_bytes())
    }

    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
        self
    }

    pub fn usizes(&mut self, v: &[usize]) -> &mut Self {
        self.u64(v.len() as u64);
        for x in v {
            self.u64(*x as u64);
        }
        self
    }

    pub fn form(&mut self, a: &SparseSymmetricForm) -> &mut Self {
        self.u64(a.dimension() as u64)
            .usizes(a.row_ptr())
            .usizes(a.col_idx())
            .f64s(a.values())
    }

    pub fn finish(&self) -> [u8; 32] {
        let out = self.0.clone().finalize();
        let mut h = [0u8; 32];
        h.copy_from_slice(&out);
        h
    }
}

/// Hash identifying a pencil (A, B) bit-exactly.
pub fn pencil_hash(a: &SparseSymmetricForm, b: &SparseSymmetricForm) -> [u8; 32] {
    ContentHasher::new().str("pencil").form(a).form(b).finish()
}

/// Lowercase hex encoding.
pub fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pencil_hash_separates_forms() {
        let a = SparseSymmetricForm::from_diagonal(&[1.0, 2.0]).unwrap();
        let b = SparseSymmetricForm::identity(2);
        assert_eq!(pencil_hash(&a, &b), pencil_hash(&a, &b));
        assert_ne!(pencil_hash(&a, &b), pencil_hash(&b, &a));
        assert_eq!(hex(&[0x0f, 0xa0]), "0fa0");
    }
}
