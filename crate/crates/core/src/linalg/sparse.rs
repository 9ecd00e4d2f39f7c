use std::collections::BTreeMap;

use super::LinalgError;

/// Symmetric sparse bilinear form stored as full CSR (both triangles).
///
/// Rows are sorted by column index, duplicates are summed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetricForm {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetricForm {
    /// Builds a form from (row, col, value) triplets. Duplicate entries are summed.
    ///
    /// The triplet list may contain both triangles or only one of them; the
    /// `symmetrize` flag mirrors off-diagonal entries when only one triangle is given.
    pub fn from_triplets(
        dim: usize,
        triplets: &[(usize, usize, f64)],
        symmetrize: bool,
    ) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::EmptyForm);
        }
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); dim];
        for &(i, j, v) in triplets {
            if i >= dim || j >= dim {
                return Err(LinalgError::IndexOutOfRange { index: i.max(j), dim });
            }
            *rows[i].entry(j).or_insert(0.0) += v;
            if symmetrize && i != j {
                *rows[j].entry(i).or_insert(0.0) += v;
            }
        }
        let form = Self::from_rows(dim, rows);
        form.check_symmetric()?;
        Ok(form)
    }

    /// Diagonal form.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self, LinalgError> {
        let triplets: Vec<_> = diag.iter().enumerate().map(|(i, &d)| (i, i, d)).collect();
        Self::from_triplets(diag.len(), &triplets, false)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim]).expect("identity is symmetric")
    }

    fn from_rows(dim: usize, rows: Vec<BTreeMap<usize, f64>>) -> Self {
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (j, v) in row {
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { dim, row_ptr, col_idx, values }
    }

    fn check_symmetric(&self) -> Result<(), LinalgError> {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                if i == j && !v.is_finite() {
                    return Err(LinalgError::NonFinite { row: i });
                }
                let vt = self.get(j, i);
                if (v - vt).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                    return Err(LinalgError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterator over (column, value) of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(p) => self.values[range.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rebuilds a form from raw CSR arrays (used by the cache reader).
    pub fn from_csr(
        dim: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        if row_ptr.len() != dim + 1
            || col_idx.len() != values.len()
            || row_ptr.last() != Some(&values.len())
            || row_ptr.windows(2).any(|w| w[0] > w[1])
            || col_idx.iter().any(|&j| j >= dim)
        {
            return Err(LinalgError::MalformedCsr);
        }
        let form = Self { dim, row_ptr, col_idx, values };
        form.check_symmetric()?;
        Ok(form)
    }

    /// y = A x
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            *yi = acc;
        }
    }

    /// xᵀ A x in one pass over the stored entries.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// xᵀ A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            let mut row = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.values[p] * y[self.col_idx[p]];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// self + scale * other
    pub fn add_scaled(&self, other: &Self, scale: f64) -> Result<Self, LinalgError> {
        if self.dim != other.dim {
            return Err(LinalgError::DimensionMismatch { left: self.dim, right: other.dim });
        }
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); self.dim];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                *row.entry(j).or_insert(0.0) += v;
            }
            for (j, v) in other.row(i) {
                *row.entry(j).or_insert(0.0) += scale * v;
            }
        }
        Ok(Self::from_rows(self.dim, rows))
    }

    pub fn scaled(&self, scale: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= scale);
        out
    }

    /// Principal submatrix on the given (sorted, unique) index set.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self, LinalgError> {
        if keep.is_empty() {
            return Err(LinalgError::EmptyForm);
        }
        let mut map = vec![usize::MAX; self.dim];
        for (new, &old) in keep.iter().enumerate() {
            if old >= self.dim {
                return Err(LinalgError::IndexOutOfRange { index: old, dim: self.dim });
            }
            map[old] = new;
        }
        let rows = keep
            .iter()
            .map(|&old| {
                self.row(old)
                    .filter(|&(j, _)| map[j] != usize::MAX)
                    .map(|(j, v)| (map[j], v))
                    .collect::<BTreeMap<_, _>>()
            })
            .collect();
        Ok(Self::from_rows(keep.len(), rows))
    }

    /// Symmetric permutation: result(p, q) = self(perm[p], perm[q]).
    pub fn permute(&self, perm: &[usize]) -> Result<Self, LinalgError> {
        if perm.len() != self.dim {
            return Err(LinalgError::DimensionMismatch { left: self.dim, right: perm.len() });
        }
        let mut inverse = vec![usize::MAX; self.dim];
        for (new, &old) in perm.iter().enumerate() {
            if old >= self.dim || inverse[old] != usize::MAX {
                return Err(LinalgError::InvalidPermutation);
            }
            inverse[old] = new;
        }
        let rows = perm
            .iter()
            .map(|&old| self.row(old).map(|(j, v)| (inverse[j], v)).collect::<BTreeMap<_, _>>())
            .collect();
        Ok(Self::from_rows(self.dim, rows))
    }

    /// Adjacency lists (off-diagonal pattern), used for orderings.
    pub(crate) fn adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.dim)
            .map(|i| self.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
            .collect()
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseSymmetricForm {
        SparseSymmetricForm::from_triplets(
            3,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 2, 2.0)],
            true,
        )
        .unwrap()
    }

    #[test]
    fn duplicates_are_summed() {
        let f = SparseSymmetricForm::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.5), (1, 1, 1.0)], false)
            .unwrap();
        assert_eq!(f.get(0, 0), 3.5);
        assert_eq!(f.nnz(), 2);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let err = SparseSymmetricForm::from_triplets(2, &[(0, 1, 1.0)], false).unwrap_err();
        assert!(matches!(err, LinalgError::NotSymmetric { .. }));
    }

    #[test]
    fn non_finite_diagonal_rejected() {
        let err = SparseSymmetricForm::from_diagonal(&[1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, LinalgError::NonFinite { row: 1 }));
    }

    #[test]
    fn quadratic_form_matches_apply() {
        let f = sample();
        let x = [1.0, 2.0, -0.5];
        let ax = f.apply(&x);
        assert!((dot(&x, &ax) - f.quadratic_form(&x)).abs() < 1e-14);
    }

    #[test]
    fn restrict_and_permute() {
        let f = sample();
        let r = f.restrict(&[0, 2]).unwrap();
        assert_eq!(r.dimension(), 2);
        assert_eq!(r.get(0, 1), 0.0);
        let p = f.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.get(0, 2), f.get(2, 1));
        assert_eq!(p.get(1, 2), f.get(0, 1));
        assert!(matches!(f.permute(&[0, 0, 1]), Err(LinalgError::InvalidPermutation)));
    }

    #[test]
    fn csr_roundtrip() {
        let f = sample();
        let g = SparseSymmetricForm::from_csr(
            3,
            f.row_ptr().to_vec(),
            f.col_idx().to_vec(),
            f.values().to_vec(),
        )
        .unwrap();
        assert_eq!(f, g);
        assert!(SparseSymmetricForm::from_csr(3, vec![0, 1], vec![0], vec![1.0]).is_err());
    }
}
