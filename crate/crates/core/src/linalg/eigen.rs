//! Smallest eigenpairs of symmetric pencils `A v = λ B v`.
//!
//! Shift-invert block Krylov iteration on `(A + σB)⁻¹B`, which is self-adjoint in
//! the B-inner product, with full B-reorthogonalization and Rayleigh–Ritz
//! extraction. The shift σ = 1 lets semidefinite A (Neumann stiffness) through.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sparse::{dot, norm2};
use super::{pencil_hash, EnvelopeCholesky, LinalgError, SparseSymmetricForm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Relative residual tolerance: ‖Av − λBv‖ ≤ tol·‖Bv‖.
    pub tol: f64,
    pub seed: u64,
    pub shift: f64,
    pub block_size: usize,
    /// Upper bound on the Krylov basis; `None` means `max(6k + 60, 200)`.
    pub max_basis: Option<usize>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-8, seed: 0x5eed, shift: 1.0, block_size: 4, max_basis: None }
    }
}

impl EigenOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenMeta {
    pub problem_hash: [u8; 32],
    pub grid_hash: [u8; 32],
    pub tol: f64,
}

/// Ordered eigenpairs with B-orthonormal vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairSet {
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// max_i |v(i)| per vector
    pub sup_norms: Vec<f64>,
    /// ‖Av − λBv‖ / ‖Bv‖ per pair
    pub residuals: Vec<f64>,
    pub meta: EigenMeta,
}

impl EigenPairSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Builds a set from externally supplied data (synthetic spectra, analytic
    /// eigenfunctions). Eigenvalues must be nondecreasing.
    pub fn from_parts(
        eigenvalues: Vec<f64>,
        vectors: Vec<Vec<f64>>,
        sup_norms: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(LinalgError::UnsortedSpectrum);
        }
        if sup_norms.len() != eigenvalues.len()
            || (!vectors.is_empty() && vectors.len() != eigenvalues.len())
        {
            return Err(LinalgError::DimensionMismatch {
                left: eigenvalues.len(),
                right: sup_norms.len().min(vectors.len()),
            });
        }
        let residuals = vec![0.0; eigenvalues.len()];
        Ok(Self {
            eigenvalues,
            vectors,
            sup_norms,
            residuals,
            meta: EigenMeta { problem_hash: [0; 32], grid_hash: [0; 32], tol: 0.0 },
        })
    }

    /// Keeps the first `k` pairs.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.len());
        Self {
            eigenvalues: self.eigenvalues[..k].to_vec(),
            vectors: self.vectors.iter().take(k).cloned().collect(),
            sup_norms: self.sup_norms[..k].to_vec(),
            residuals: self.residuals[..k].to_vec(),
            meta: self.meta.clone(),
        }
    }

    /// Largest |vᵢᵀBvⱼ − δᵢⱼ| over all pairs.
    pub fn orthonormality_defect(&self, b: &SparseSymmetricForm) -> f64 {
        let bv: Vec<Vec<f64>> = self.vectors.iter().map(|v| b.apply(v)).collect();
        let mut worst = 0.0f64;
        for (i, vi) in self.vectors.iter().enumerate() {
            for (j, bvj) in bv.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(vi, bvj) - target).abs());
            }
        }
        worst
    }
}

/// ‖Av − λBv‖ / ‖Bv‖
pub fn relative_residual(
    a: &SparseSymmetricForm,
    b: &SparseSymmetricForm,
    lambda: f64,
    v: &[f64],
) -> f64 {
    let av = a.apply(v);
    let bv = b.apply(v);
    let r: Vec<f64> = av.iter().zip(&bv).map(|(x, y)| x - lambda * y).collect();
    norm2(&r) / norm2(&bv).max(f64::MIN_POSITIVE)
}

/// The `k` smallest eigenpairs of `A v = λ B v`.
pub fn solve_generalized(
    a: &SparseSymmetricForm,
    b: &SparseSymmetricForm,
    k: usize,
    opts: &EigenOptions,
) -> Result<EigenPairSet, LinalgError> {
    let n = a.dimension();
    if b.dimension() != n {
        return Err(LinalgError::DimensionMismatch { left: n, right: b.dimension() });
    }
    if k == 0 || k > n {
        return Err(LinalgError::InvalidCount { k, dim: n });
    }
    EnvelopeCholesky::factor(b).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { pivot, value } => {
            LinalgError::MassNotPositiveDefinite { pivot, value }
        }
        other => other,
    })?;
    if n <= DENSE_LIMIT {
        return Ok(dense(a, b, k, opts.tol));
    }
    // When the wanted eigenvalues sit far below the shift they map to a tight
    // cluster near 1/shift; retry with the shift moved down to their scale.
    let mut shift = opts.shift;
    let mut first_error = None;
    for _ in 0..3 {
        match attempt(a, b, k, opts, shift) {
            Ok(set) => return Ok(set),
            Err((err, estimate)) => {
                let retry = matches!(err, LinalgError::NoConvergence { .. })
                    && estimate.is_some_and(|l| l < 0.05 * shift);
                if first_error.is_none() {
                    first_error = Some(err.clone());
                }
                if !retry {
                    return Err(if matches!(err, LinalgError::ShiftedNotPositiveDefinite { .. }) {
                        first_error.unwrap_or(err)
                    } else {
                        err
                    });
                }
                let l = estimate.unwrap_or(0.0);
                shift = if l > 0.0 { l } else { shift * 1e-4 };
                log::debug!("eigensolver retry with shift {shift:e}");
            }
        }
    }
    Err(first_error.expect("at least one attempt"))
}

/// Pencils up to this size are solved densely.
const DENSE_LIMIT: usize = 300;

/// Dense reduction C = L⁻¹AL⁻ᵀ with B = LLᵀ.
fn dense(a: &SparseSymmetricForm, b: &SparseSymmetricForm, k: usize, tol: f64) -> EigenPairSet {
    let n = a.dimension();
    let to_dense = |f: &SparseSymmetricForm| {
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for (j, v) in f.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    };
    let l = to_dense(b).cholesky().expect("mass factored above").l();
    let li = l.clone().solve_lower_triangular(&DMatrix::identity(n, n)).expect("nonsingular factor");
    let c = &li * to_dense(a) * li.transpose();
    let eig = SymmetricEigen::new((&c + c.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let pairs = order
        .into_iter()
        .take(k)
        .map(|idx| {
            let y = eig.eigenvectors.column(idx).into_owned();
            let x = li.transpose() * y;
            let v: Vec<f64> = x.iter().copied().collect();
            let lambda = eig.eigenvalues[idx];
            let res = relative_residual(a, b, lambda, &v);
            (lambda, v, res)
        })
        .collect();
    finish(a, b, pairs, tol)
}

fn attempt(
    a: &SparseSymmetricForm,
    b: &SparseSymmetricForm,
    k: usize,
    opts: &EigenOptions,
    shift: f64,
) -> Result<EigenPairSet, (LinalgError, Option<f64>)> {
    let n = a.dimension();
    let shifted = a.add_scaled(b, shift).map_err(|e| (e, None))?;
    let chol = EnvelopeCholesky::factor(&shifted).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { pivot, value } => {
            (LinalgError::ShiftedNotPositiveDefinite { pivot, value, shift }, None)
        }
        other => (other, None),
    })?;

    let mut krylov = Krylov::new(b, n, opts.seed);
    let bs = opts.block_size.max(1).min(k.max(1)).min(n);
    let max_basis = opts.max_basis.unwrap_or((6 * k + 60).max(200)).min(n).max(k.min(n));
    krylov.push_block(bs);

    let check_every = (k / 2).max(2 * bs);
    let mut last_check = 0usize;
    let mut best: Option<(f64, usize)> = None;
    let mut estimate: Option<f64> = None;
    loop {
        // Expand the oldest block whose operator image is not yet known.
        let expanded = krylov.expand(&chol, bs, max_basis);
        let m = krylov.images;
        let exhausted = !expanded || krylov.basis.len() >= max_basis && m == krylov.basis.len();
        if m >= k && (m - last_check >= check_every || exhausted || m >= max_basis) {
            last_check = m;
            let ritz = krylov.ritz(k, shift);
            let mut worst = 0.0f64;
            let mut converged = 0;
            let mut pairs = Vec::with_capacity(k);
            for (lambda, x) in ritz {
                let res = relative_residual(a, b, lambda, &x);
                worst = worst.max(res);
                if res <= opts.tol {
                    converged += 1;
                }
                pairs.push((lambda, x, res));
            }
            estimate = pairs.iter().map(|p| p.0).reduce(f64::max);
            if best.map_or(true, |(r, _)| worst < r) {
                best = Some((worst, converged));
            }
            if converged == k {
                return Ok(finish(a, b, pairs, opts.tol));
            }
        }
        if exhausted || m >= max_basis {
            let (best_residual, converged) = best.unwrap_or((f64::INFINITY, 0));
            return Err((LinalgError::NoConvergence { best_residual, converged, requested: k }, estimate));
        }
    }
}

/// Smallest generalized eigenvalue (the infimum of vᵀAv / vᵀBv).
pub fn rayleigh_min(
    a: &SparseSymmetricForm,
    b: &SparseSymmetricForm,
    opts: &EigenOptions,
) -> Result<f64, LinalgError> {
    Ok(solve_generalized(a, b, 1, opts)?.eigenvalues[0])
}

fn finish(
    a: &SparseSymmetricForm,
    b: &SparseSymmetricForm,
    mut pairs: Vec<(f64, Vec<f64>, f64)>,
    tol: f64,
) -> EigenPairSet {
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut eigenvalues = Vec::with_capacity(pairs.len());
    let mut vectors = Vec::with_capacity(pairs.len());
    let mut sup_norms = Vec::with_capacity(pairs.len());
    let mut residuals = Vec::with_capacity(pairs.len());
    for (lambda, mut v, res) in pairs {
        let norm = b.quadratic_form(&v).sqrt();
        let pivot = v
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc })
            .0;
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        v.iter_mut().for_each(|x| *x *= sign / norm);
        sup_norms.push(v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        eigenvalues.push(lambda);
        vectors.push(v);
        residuals.push(res);
    }
    EigenPairSet {
        eigenvalues,
        vectors,
        sup_norms,
        residuals,
        meta: EigenMeta { problem_hash: pencil_hash(a, b), grid_hash: [0; 32], tol },
    }
}

struct Krylov<'a> {
    b: &'a SparseSymmetricForm,
    n: usize,
    rng: ChaCha8Rng,
    basis: Vec<Vec<f64>>,
    b_basis: Vec<Vec<f64>>,
    /// h[j][i]: coefficient of basis vector i in op(basis j)
    h: Vec<Vec<f64>>,
    /// number of basis vectors whose operator image has been orthogonalized
    images: usize,
}

impl<'a> Krylov<'a> {
    fn new(b: &'a SparseSymmetricForm, n: usize, seed: u64) -> Self {
        Self {
            b,
            n,
            rng: ChaCha8Rng::seed_from_u64(seed),
            basis: Vec::new(),
            b_basis: Vec::new(),
            h: Vec::new(),
            images: 0,
        }
    }

    fn random_vector(&mut self) -> Vec<f64> {
        (0..self.n).map(|_| self.rng.gen_range(-1.0..1.0)).collect()
    }

    /// Orthogonalizes `w` against the basis (two passes); returns coefficients
    /// and the B-norm of the remainder.
    fn orthogonalize(&self, w: &mut [f64]) -> (Vec<f64>, f64) {
        let mut coeffs = vec![0.0; self.basis.len()];
        for _ in 0..2 {
            for (i, (v, bv)) in self.basis.iter().zip(&self.b_basis).enumerate() {
                let c = dot(bv, w);
                coeffs[i] += c;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= c * vk;
                }
            }
        }
        let norm = self.b.quadratic_form(w).max(0.0).sqrt();
        (coeffs, norm)
    }

    fn append(&mut self, mut w: Vec<f64>, norm: f64) {
        w.iter_mut().for_each(|x| *x /= norm);
        let bw = self.b.apply(&w);
        self.basis.push(w);
        self.b_basis.push(bw);
    }

    /// Appends `count` random B-orthonormal vectors.
    fn push_block(&mut self, count: usize) {
        let mut added = 0;
        let mut attempts = 0;
        while added < count && self.basis.len() < self.n && attempts < 10 * count + 10 {
            attempts += 1;
            let mut w = self.random_vector();
            let before = self.b.quadratic_form(&w).sqrt();
            let (_, norm) = self.orthogonalize(&mut w);
            if norm > 1e-8 * before {
                self.append(w, norm);
                added += 1;
            }
        }
    }

    /// Applies the operator to the next `bs` basis vectors lacking images and
    /// appends the orthogonalized results. Returns false once the basis cannot grow.
    fn expand(&mut self, chol: &EnvelopeCholesky, bs: usize, max_basis: usize) -> bool {
        if self.images >= self.basis.len() {
            return false;
        }
        let end = (self.images + bs).min(self.basis.len());
        for j in self.images..end {
            let mut w = chol.solve(&self.b_basis[j]);
            let scale = self.b.quadratic_form(&w).max(0.0).sqrt();
            let (coeffs, norm) = self.orthogonalize(&mut w);
            self.h.push(coeffs);
            if self.basis.len() < max_basis.min(self.n) {
                if norm > 1e-7 * scale {
                    self.h[j].push(norm);
                    self.append(w, norm);
                } else {
                    // invariant subspace reached: continue from a fresh direction
                    self.h[j].push(0.0);
                    let before = self.basis.len();
                    self.push_block(1);
                    if self.basis.len() == before {
                        self.h[j].pop();
                    }
                }
            }
            self.images = j + 1;
        }
        true
    }

    /// Ritz pairs for the `k` smallest λ from the square part of the projection.
    fn ritz(&self, k: usize, shift: f64) -> Vec<(f64, Vec<f64>)> {
        let m = self.images;
        let mut t = DMatrix::<f64>::zeros(m, m);
        for (j, col) in self.h.iter().enumerate().take(m) {
            for (i, &c) in col.iter().enumerate().take(m) {
                t[(i, j)] = c;
            }
        }
        let sym = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        order
            .into_iter()
            .take(k)
            .map(|idx| {
                let theta = eig.eigenvalues[idx];
                let lambda = 1.0 / theta - shift;
                let mut x = vec![0.0; self.n];
                for (i, v) in self.basis.iter().enumerate().take(m) {
                    let c = eig.eigenvectors[(i, idx)];
                    if c != 0.0 {
                        for (xk, vk) in x.iter_mut().zip(v) {
                            *xk += c * vk;
                        }
                    }
                }
                (lambda, x)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_pencil() {
        let a = SparseSymmetricForm::from_diagonal(&[3.0, 1.0, 2.0]).unwrap();
        let b = SparseSymmetricForm::identity(3);
        let e = solve_generalized(&a, &b, 2, &EigenOptions::default()).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-10);
        assert!((e.eigenvalues[1] - 2.0).abs() < 1e-10);
        assert!(e.vectors[0][1].abs() > 0.999);
    }

    #[test]
    fn identity_pencil_gives_ones() {
        let mut t = Vec::new();
        for i in 0..30 {
            t.push((i, i, 3.0 + i as f64 * 0.1));
            if i + 1 < 30 {
                t.push((i, i + 1, -1.0));
            }
        }
        let a = SparseSymmetricForm::from_triplets(30, &t, true).unwrap();
        let e = solve_generalized(&a, &a, 5, &EigenOptions::default()).unwrap();
        for l in &e.eigenvalues {
            assert!((l - 1.0).abs() < 1e-10, "{l}");
        }
        assert!(e.orthonormality_defect(&a) < 1e-7);
    }

    #[test]
    fn rayleigh_min_diag() {
        let a = SparseSymmetricForm::from_diagonal(&[5.0, 7.0]).unwrap();
        let b = SparseSymmetricForm::identity(2);
        let r = rayleigh_min(&a, &b, &EigenOptions::default()).unwrap();
        assert!((r - 5.0).abs() < 1e-10);
    }

    #[test]
    fn indefinite_mass_rejected() {
        let a = SparseSymmetricForm::identity(3);
        let b = SparseSymmetricForm::from_diagonal(&[1.0, 0.0, 1.0]).unwrap();
        let err = solve_generalized(&a, &b, 1, &EigenOptions::default()).unwrap_err();
        assert!(matches!(err, LinalgError::MassNotPositiveDefinite { .. }));
    }

    #[test]
    fn too_many_pairs_rejected() {
        let a = SparseSymmetricForm::identity(3);
        let err = solve_generalized(&a, &a, 4, &EigenOptions::default()).unwrap_err();
        assert!(matches!(err, LinalgError::InvalidCount { k: 4, dim: 3 }));
    }

    #[test]
    fn iteration_budget_exhaustion_reports_best_residual() {
        let n = 400;
        let diag: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 1e-3).collect();
        let a = SparseSymmetricForm::from_diagonal(&diag).unwrap();
        let b = SparseSymmetricForm::identity(n);
        let opts = EigenOptions { tol: 1e-14, max_basis: Some(12), ..EigenOptions::default() };
        match solve_generalized(&a, &b, 10, &opts) {
            Err(LinalgError::NoConvergence { best_residual, requested, .. }) => {
                assert_eq!(requested, 10);
                assert!(best_residual.is_finite() && best_residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
