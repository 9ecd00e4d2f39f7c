//! Envelope (skyline) Cholesky factorization with reverse Cuthill–McKee ordering.
//!
//! Meshes in this crate are graded 2-D triangulations of a few thousand nodes
//! and 1-D radial grids, both of which have small envelopes after RCM.

use std::collections::VecDeque;

use super::{LinalgError, SparseSymmetricForm};

#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    /// first stored column of each (permuted) row
    first: Vec<usize>,
    /// start offset of each row in `data`
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors a symmetric positive definite form.
    pub fn factor(a: &SparseSymmetricForm) -> Result<Self, LinalgError> {
        let n = a.dimension();
        let perm = reverse_cuthill_mckee(a);
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }

        let mut first = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            let mut f = new;
            for (j, _) in a.row(old) {
                f = f.min(inverse[j]);
            }
            first[new] = f;
        }
        let mut offset = Vec::with_capacity(n + 1);
        let mut total = 0usize;
        for i in 0..n {
            offset.push(total);
            total += i - first[i] + 1;
        }
        offset.push(total);
        let mut data = vec![0.0; total];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in a.row(old) {
                let jn = inverse[j];
                if jn <= new {
                    data[offset[new] + jn - first[new]] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let oi = offset[i];
            for j in fi..i {
                let fj = first[j];
                let oj = offset[j];
                let k0 = fi.max(fj);
                let mut s = data[oi + j - fi];
                let row_i = &data[oi + k0 - fi..oi + j - fi];
                let row_j = &data[oj + k0 - fj..oj + j - fj];
                for (a, b) in row_i.iter().zip(row_j) {
                    s -= a * b;
                }
                data[oi + j - fi] = s / data[oj + j - fj];
            }
            let row_i = &data[oi..oi + i - fi];
            let s = data[oi + i - fi] - row_i.iter().map(|v| v * v).sum::<f64>();
            if !(s > 0.0) || !s.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { pivot: perm[i], value: s });
            }
            data[oi + i - fi] = s.sqrt();
        }
        Ok(Self { n, perm, first, offset, data })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.solve_permuted_in_place(&mut y);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    fn solve_permuted_in_place(&self, y: &mut [f64]) {
        for i in 0..self.n {
            let fi = self.first[i];
            let oi = self.offset[i];
            let mut s = y[i];
            for (k, l) in (fi..i).zip(&self.data[oi..oi + i - fi]) {
                s -= l * y[k];
            }
            y[i] = s / self.data[oi + i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let oi = self.offset[i];
            let xi = y[i] / self.data[oi + i - fi];
            y[i] = xi;
            for (k, l) in (fi..i).zip(&self.data[oi..oi + i - fi]) {
                y[k] -= l * xi;
            }
        }
    }

    /// log det A
    pub fn log_determinant(&self) -> f64 {
        (0..self.n)
            .map(|i| 2.0 * self.data[self.offset[i] + i - self.first[i]].ln())
            .sum()
    }
}

/// Reverse Cuthill–McKee ordering, one BFS per connected component started
/// from a pseudo-peripheral node. Returns perm with perm[new] = old.
pub fn reverse_cuthill_mckee(a: &SparseSymmetricForm) -> Vec<usize> {
    let adj = a.adjacency();
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let mut seeds: Vec<usize> = (0..n).collect();
    seeds.sort_by_key(|&i| (degree[i], i));
    for &seed in &seeds {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(&adj, &degree, seed);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::from([start]);
    level[start] = 0;
    let mut depth = 0;
    let mut members = Vec::new();
    while let Some(v) = queue.pop_front() {
        members.push(v);
        depth = depth.max(level[v]);
        for &w in &adj[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let last: Vec<usize> = members.into_iter().filter(|&v| level[v] == depth).collect();
    (last, depth)
}

fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut current = seed;
    let (mut last, mut depth) = bfs_levels(adj, current);
    for _ in 0..8 {
        let candidate = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap_or(&current);
        let (next_last, next_depth) = bfs_levels(adj, candidate);
        if next_depth <= depth {
            break;
        }
        current = candidate;
        last = next_last;
        depth = next_depth;
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> SparseSymmetricForm {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseSymmetricForm::from_triplets(n, &t, true).unwrap()
    }

    #[test]
    fn solves_tridiagonal() {
        let a = laplacian_1d(50, 0.1);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.apply(&x_true);
        let x = EnvelopeCholesky::factor(&a).unwrap().solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = SparseSymmetricForm::from_diagonal(&[1.0, -2.0, 3.0]).unwrap();
        let err = EnvelopeCholesky::factor(&a).unwrap_err();
        assert!(matches!(err, LinalgError::NotPositiveDefinite { pivot: 1, .. }));
    }

    #[test]
    fn rcm_is_a_permutation_and_keeps_grid_banded() {
        // 2-D 5-point grid, lexicographic numbering scrambled
        let m = 12;
        let n = m * m;
        let scramble: Vec<usize> = (0..n).map(|i| (i * 37) % n).collect();
        let mut t = Vec::new();
        for r in 0..m {
            for c in 0..m {
                let i = scramble[r * m + c];
                t.push((i, i, 4.5));
                if c + 1 < m {
                    t.push((i, scramble[r * m + c + 1], -1.0));
                }
                if r + 1 < m {
                    t.push((i, scramble[(r + 1) * m + c], -1.0));
                }
            }
        }
        let a = SparseSymmetricForm::from_triplets(n, &t, true).unwrap();
        let mut perm = reverse_cuthill_mckee(&a);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        assert!(chol.envelope_size() <= n * (2 * m + 2));
        perm.sort_unstable();
        assert_eq!(perm, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn log_determinant_of_diagonal() {
        let a = SparseSymmetricForm::from_diagonal(&[2.0, 3.0, 5.0]).unwrap();
        let ld = EnvelopeCholesky::factor(&a).unwrap().log_determinant();
        assert!((ld - 30f64.ln()).abs() < 1e-14);
    }
}
