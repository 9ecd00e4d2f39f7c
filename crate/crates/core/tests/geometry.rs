use cusplab::geometry::{lemma_ed_check, modulus_check, CuspDomain, CuspProfile};

fn canonical(w_min: f64) -> CuspDomain {
    CuspDomain::new(CuspProfile::canonical(1.0, 2.0).unwrap(), w_min).unwrap()
}

/// Minimum over 10⁶ exact graph samples, graded toward the tip.
fn brute_force_distance(d: &CuspDomain, p: (f64, f64)) -> f64 {
    let n = 1_000_000;
    let a = d.half_width;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        let t = i as f64 / n as f64;
        // half the samples uniform, half concentrated near the tip
        let x = if i % 2 == 0 { -a + 2.0 * a * t } else { (2.0 * t - 1.0).powi(5) * a };
        let y = d.top(x);
        best = best.min(((x - p.0).powi(2) + (y - p.1).powi(2)).sqrt());
    }
    best
}

#[test]
fn distance_matches_dense_sampling() {
    let d = canonical(1e-4);
    let fractions = [((-2.0f64).exp(), 0.1), (0.01, 0.9), (-0.3, 0.5), (1e-3, 0.99), (0.0, 0.5), (2e-4, 0.999)];
    for (xp, frac) in fractions {
        let p = if frac < 0.5 { (xp, frac) } else { (xp, frac * d.top(xp)) };
        let got = d.boundary_distance(p).unwrap();
        let want = brute_force_distance(&d, p);
        assert!(got <= want + 1e-9, "{p:?}: {got} > {want}");
        assert!(want - got <= 1e-6, "{p:?}: {got} vs {want}");
    }
}

#[test]
fn distance_is_one_lipschitz_along_segments() {
    let d = canonical(1e-3);
    let (p, q) = ((-0.3, 0.002), (0.3, 0.015));
    let n = 2000;
    let pts: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            (p.0 + (q.0 - p.0) * t, p.1 + (q.1 - p.1) * t)
        })
        .collect();
    let mut prev: Option<((f64, f64), f64)> = None;
    for x in pts {
        let dist = d.boundary_distance(x).unwrap();
        if let Some((y, dy)) = prev {
            let step = ((x.0 - y.0).powi(2) + (x.1 - y.1).powi(2)).sqrt();
            assert!((dist - dy).abs() <= step * (1.0 + 1e-9) + 1e-12);
        }
        prev = Some((x, dist));
    }
}

#[test]
fn repaired_lower_bound_holds_on_canonical_profile() {
    let d = canonical(1e-4);
    let report = lemma_ed_check(&d, 10_000, 7).unwrap();
    assert_eq!(report.samples.len(), 10_000);
    assert_eq!(report.upper_violations, 0);
    assert_eq!(report.repaired_violations, 0);
    assert!(report.samples.iter().all(|s| s.e_val <= 1e-2));
    assert!(report.a_eff >= 1.0 - 1e-12);
}

#[test]
fn flat_top_makes_upper_bound_tight() {
    let sq = CuspDomain::unit_square();
    for x in [(0.0, 0.9), (0.2, 0.95), (-0.1, 0.99)] {
        let e = sq.vertical_gap(x).unwrap();
        assert!((sq.boundary_distance(x).unwrap() - e).abs() < 1e-15);
    }
}

#[test]
fn canonical_modulus_constant_is_finite() {
    let r = modulus_check(&CuspProfile::canonical(1.0, 2.0).unwrap(), 10_000, 3).unwrap();
    assert!(r.pass);
    assert!(r.a_eff.is_finite() && r.a_eff >= 1.0 - 1e-12 && r.a_eff < 10.0, "{r:?}");
}
