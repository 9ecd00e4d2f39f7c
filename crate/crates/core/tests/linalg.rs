use cusplab::linalg::{
    adaptive_quad, double_exponential, rayleigh_min, solve_generalized, EigenOptions, Interval,
    SparseSymmetricForm,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// P1 stiffness and consistent mass on a uniform grid of [0, 1].
fn neumann_1d(n_cells: usize) -> (SparseSymmetricForm, SparseSymmetricForm) {
    let h = 1.0 / n_cells as f64;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for e in 0..n_cells {
        let (i, j) = (e, e + 1);
        for (p, q, ka, mb) in [(i, i, 1.0, 2.0), (j, j, 1.0, 2.0), (i, j, -1.0, 1.0), (j, i, -1.0, 1.0)] {
            a.push((p, q, ka / h));
            b.push((p, q, mb * h / 6.0));
        }
    }
    let n = n_cells + 1;
    (
        SparseSymmetricForm::from_triplets(n, &a, false).unwrap(),
        SparseSymmetricForm::from_triplets(n, &b, false).unwrap(),
    )
}

fn dense(a: &SparseSymmetricForm) -> DMatrix<f64> {
    let n = a.dimension();
    DMatrix::from_fn(n, n, |i, j| a.get(i, j))
}

fn dense_generalized(a: &SparseSymmetricForm, b: &SparseSymmetricForm) -> Vec<f64> {
    let l = dense(b).cholesky().unwrap().l();
    let li = l.clone().try_inverse().unwrap();
    let c = &li * dense(a) * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[test]
fn neumann_fd_laplacian_matches_dense_oracle() {
    let (a, b) = neumann_1d(100);
    let set = solve_generalized(&a, &b, 6, &EigenOptions::with_tol(1e-9)).unwrap();
    let oracle = dense_generalized(&a, &b);
    for (k, (got, want)) in set.eigenvalues.iter().zip(&oracle).enumerate() {
        assert!((got - want).abs() <= 1e-7 * want.abs().max(1.0), "pair {k}: {got} vs {want}");
    }
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((set.eigenvalues[1] - pi2).abs() / pi2 < 1e-3);
    assert!(set.eigenvalues[0].abs() < 1e-8);
    for (k, &lam) in set.eigenvalues.iter().enumerate() {
        let r = cusplab::linalg::relative_residual(&a, &b, lam, &set.vectors[k]);
        assert!(r <= 1e-9, "residual {r}");
    }
    assert!(set.orthonormality_defect(&b) <= 1e-8);
}

#[test]
fn iterative_path_matches_dense_oracle() {
    let (a, b) = neumann_1d(600);
    let set = solve_generalized(&a, &b, 8, &EigenOptions::default()).unwrap();
    let oracle = dense_generalized(&a, &b);
    for (k, (got, want)) in set.eigenvalues.iter().zip(&oracle).enumerate() {
        assert!((got - want).abs() <= 1e-7 * want.abs().max(1.0), "pair {k}: {got} vs {want}");
    }
    assert!(set.residuals.iter().all(|&r| r <= 1e-8));
    assert!(set.orthonormality_defect(&b) <= 1e-8);
}

#[test]
fn diagonal_and_identity_pencils() {
    let a = SparseSymmetricForm::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
    let i = SparseSymmetricForm::identity(3);
    let set = solve_generalized(&a, &i, 2, &EigenOptions::default()).unwrap();
    assert!((set.eigenvalues[0] - 1.0).abs() < 1e-10 && (set.eigenvalues[1] - 2.0).abs() < 1e-10);
    let (_, m) = neumann_1d(30);
    let set = solve_generalized(&m, &m, 5, &EigenOptions::default()).unwrap();
    assert!(set.eigenvalues.iter().all(|l| (l - 1.0).abs() < 1e-8));
    let d = SparseSymmetricForm::from_diagonal(&[5.0, 7.0]).unwrap();
    let r = rayleigh_min(&d, &SparseSymmetricForm::identity(2), &EigenOptions::default()).unwrap();
    assert!((r - 5.0).abs() < 1e-10);
}

#[test]
fn spectrum_invariant_under_symmetric_permutation() {
    let (a, b) = neumann_1d(60);
    let n = a.dimension();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in (1..n).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let tol = 1e-9;
    let opts = EigenOptions::with_tol(tol);
    let s1 = solve_generalized(&a, &b, 8, &opts).unwrap();
    let s2 = solve_generalized(&a.permute(&perm).unwrap(), &b.permute(&perm).unwrap(), 8, &opts).unwrap();
    for (x, y) in s1.eigenvalues.iter().zip(&s2.eigenvalues) {
        assert!((x - y).abs() <= 10.0 * tol * x.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn rayleigh_min_bounds_random_quotients() {
    let (k, m) = neumann_1d(40);
    let a = k.add_scaled(&m, 1.0).unwrap();
    let lmin = rayleigh_min(&a, &m, &EigenOptions::default()).unwrap();
    assert!((lmin - 1.0).abs() < 1e-8, "stiffness+mass over mass gives {lmin}");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let v: Vec<f64> = (0..a.dimension()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!(lmin <= a.quadratic_form(&v) / m.quadratic_form(&v) + 1e-12);
    }
}

#[test]
fn solver_is_deterministic() {
    let (a, b) = neumann_1d(50);
    let opts = EigenOptions::default();
    let s1 = solve_generalized(&a, &b, 4, &opts).unwrap();
    let s2 = solve_generalized(&a, &b, 4, &opts).unwrap();
    assert_eq!(s1, s2);
}

#[test]
fn log_integrand_agrees_across_rules() {
    let f = |u: f64| 1.0 / (u * u * u.ln());
    let two_pi = 2.0 * std::f64::consts::PI;
    let gk = adaptive_quad(f, Interval::HalfInfinite(two_pi), 1e-14).unwrap();
    let de = double_exponential(f, Interval::HalfInfinite(two_pi), 1e-13).unwrap();
    assert!(((gk.value - de.value) / de.value).abs() < 1e-8, "{} vs {}", gk.value, de.value);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_form_powers(p in 0.0f64..4.0, b in 0.5f64..3.0) {
        let r = adaptive_quad(|x| x.powf(p), Interval::Finite(0.0, b), 1e-11).unwrap();
        let exact = b.powf(p + 1.0) / (p + 1.0);
        prop_assert!((r.value - exact).abs() <= r.error_estimate.max(1e-13));
    }

    #[test]
    fn random_diagonal_pencils(d in proptest::collection::vec(0.0f64..50.0, 5..30)) {
        let a = SparseSymmetricForm::from_diagonal(&d).unwrap();
        let b = SparseSymmetricForm::identity(d.len());
        let set = solve_generalized(&a, &b, 3, &EigenOptions::with_tol(1e-10)).unwrap();
        let mut sorted = d.clone();
        sorted.sort_by(f64::total_cmp);
        for (x, y) in set.eigenvalues.iter().zip(&sorted) {
            prop_assert!((x - y).abs() < 1e-8 * y.max(1.0));
        }
    }
}
