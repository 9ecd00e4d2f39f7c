use std::f64::consts::{E, PI};

use cusplab::linalg::{gauss_legendre, EigenOptions};
use cusplab::manifold::*;

const TRUNCATIONS: [f64; 4] = [1e3, 1e4, 1e5, 1e6];

#[test]
fn cusp_distance_matches_quadrature() {
    for alpha in [3.0, 4.0, 6.0] {
        for u0 in [E.powi(2), E.powi(4)] {
            let closed = cusp_distance(alpha, u0).unwrap();
            let quad = cusp_distance_quad(alpha, u0, 1e-11).unwrap();
            assert!((closed - quad).abs() <= 1e-8 * closed, "alpha {alpha} u0 {u0}: {closed} vs {quad}");
        }
    }
}

/// Composite Gauss–Legendre on [a, b] with `pieces` panels.
fn composite(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let (x, w) = gauss_legendre(20);
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|p| {
            let l = a + p as f64 * h;
            x.iter().zip(&w).map(|(xi, wi)| wi * f(l + 0.5 * h * (xi + 1.0))).sum::<f64>() * 0.5 * h
        })
        .sum()
}

#[test]
fn ball_volume_at_half_radius() {
    let b = ball_volume(4.0, 0.5).unwrap();
    assert!((b.log_eta - 2.0).abs() < 1e-14);
    // 2π ∫_2^∞ e^(−v) v^(−4) dv; the tail past v = 80 is below e^(−80)
    let oracle = 2.0 * PI * composite(|v| (-v).exp() * v.powi(-4), 2.0, 80.0, 400);
    assert!((b.quad_value - oracle).abs() < 1e-10 * oracle, "{} vs {oracle}", b.quad_value);
    assert!(b.cross_check_error() < 1e-6);
}

#[test]
fn ball_volume_integrators_agree() {
    for eps in [0.5, 0.1, 0.05] {
        let b = ball_volume(4.0, eps).unwrap();
        assert!(b.cross_check_error() < 1e-6, "eps {eps}: {b:?}");
    }
    // the proof-line asymptotic improves as the radius shrinks
    let r: Vec<f64> = [0.5, 0.1, 0.05, 0.01].iter().map(|&e| ball_volume(4.0, e).unwrap().ratio_to_proof_asymptotic()).collect();
    assert!(r.windows(2).all(|w| (1.0 - w[1]).abs() < (1.0 - w[0]).abs()), "{r:?}");
}

#[test]
fn embedding_table_is_monotone() {
    let us: Vec<f64> = (0..40).map(|i| U_MIN + (100.0 - U_MIN) * i as f64 / 39.0).collect();
    let pts = embedding_cloud(2.0, &us, &[0.0, 0.7, 2.0]).unwrap();
    for p in &pts {
        let g = metric_eval(2.0, p.u).unwrap();
        assert!((p.x * p.x + p.y * p.y - g).abs() <= 4.0 * f64::EPSILON * g);
        if p.theta == 0.0 {
            assert_eq!(p.y, 0.0);
        }
    }
    let zs: Vec<f64> = pts.iter().step_by(3).map(|p| p.z).collect();
    assert!(zs.windows(2).all(|w| w[1] > w[0]));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("embed.csv");
    write_embedding_csv(&pts, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), pts.len() + 1);
    assert!(text.starts_with("u,theta,x,y,z"));
}

#[test]
fn endpoint_table_is_reproduced() {
    for n in [0u32, 1, 2] {
        for alpha in [1.0, 2.0, 3.0] {
            let m = ManifoldModel::new(alpha, n, Boundary::Neumann, 1e6).unwrap();
            let r = endpoint_classify(&m, &TRUNCATIONS).unwrap();
            for c in &r.candidates {
                assert!(c.matches_expectation(), "n {n} alpha {alpha}: {c:?}");
            }
            assert!(r.limit_point());
        }
    }
}

#[test]
fn manifold_hardy_nonincreasing_in_truncation() {
    for alpha in [1.0, 2.0] {
        let sweep = hardy_manifold_sweep(alpha, &[1e3, 1e4, 1e5], 1e-8).unwrap();
        assert!(sweep.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-6)), "{sweep:?}");
        assert!(sweep.iter().all(|s| s.1 > 0.0));
    }
}

#[test]
fn manifold_hardy_test_vector_bounds_the_infimum() {
    for u in [1e3, 1e5] {
        let q = hardy_test_quotient(u).unwrap();
        let m = ManifoldModel::new(1.0, 0, Boundary::Neumann, u).unwrap();
        let inf = hardy_manifold_constant(&m, 1e-8).unwrap();
        assert!(q.is_finite() && inf <= q, "U {u}: inf {inf} quotient {q}");
    }
}

#[test]
fn radial_eigenfunctions_are_weighted_orthonormal() {
    let tol = 1e-7;
    let m = ManifoldModel::new(1.0, 0, Boundary::Neumann, 1e4).unwrap();
    let s = solve_radial(&m, 5, &EigenOptions::with_tol(tol)).unwrap();
    assert!(s.pairs.orthonormality_defect(&s.pencil.b) <= 10.0 * tol);
    let n1 = ManifoldModel::new(1.0, 1, Boundary::Dirichlet, 1e4).unwrap();
    let s1 = solve_radial(&n1, 3, &EigenOptions::with_tol(tol)).unwrap();
    // the angular term only raises the spectrum
    assert!(s1.pairs.eigenvalues[0] > s.pairs.eigenvalues[0]);
}

#[test]
fn breakdown_trace_grows_with_log_power() {
    let r = supnorm_trace(1.0, 1, &TRUNCATIONS, &TraceOptions::default()).unwrap();
    assert!(r.strictly_increasing(), "{:?}", r.sup_norms());
    let fit = r.fit.unwrap();
    assert!(fit.relative_gap() < 0.2, "{fit:?}");
    assert!(r.rows.iter().all(|row| !row.crossing_flagged));
    assert!(r.rows.iter().all(|row| row.transformed_residual < 1e-3), "{:?}", r.rows);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    r.write_csv(&path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 5);
}
