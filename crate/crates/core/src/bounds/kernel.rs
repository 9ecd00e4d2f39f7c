use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fits::{eigen_growth_fit, supnorm_bound_fit, BoundFit, GrowthLaw};
use super::{linear_fit, BoundsError};
use crate::linalg::{EigenPairSet, Interval, Quadrature};

/// Where the diagonal K(t, x, x) is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelPoint {
    /// A node of the discretization (entry of every eigenvector).
    Node(usize),
    /// The pointwise envelope Σ e^(−λt)‖f_n‖∞², an upper bound for the diagonal
    /// at every point. Used when only sup-norms are available.
    Envelope,
}

/// Extrapolation model for the missing part of the series: λ_n ≥ growth(n) and
/// ‖f_n‖∞ ≤ c8 exp(c9 λ_n^q) for every n beyond the computed pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailModel {
    pub growth: GrowthLaw,
    pub c8: f64,
    pub c9: f64,
    pub q: f64,
}

const TAIL_RELATIVE: f64 = 1e-6;

impl TailModel {
    /// Growth law at its fitted exponent with a zero-violation c6, and sup-norm
    /// constants at the exponent 1/α.
    pub fn from_fits(e: &EigenPairSet, alpha: f64) -> Result<Self, BoundsError> {
        let g = eigen_growth_fit(e, alpha)?;
        let s = supnorm_bound_fit(e, alpha)?;
        Ok(Self { growth: g.growth_law_at_fitted(e), c8: s.constants.0, c9: s.constants.1, q: s.asserted_exponent })
    }

    fn log_term(&self, x: f64, t: f64) -> f64 {
        let l = self.growth.eval(x);
        2.0 * self.c8.ln() - t * l + 2.0 * self.c9 * l.powf(self.q)
    }

    /// Bound on Σ_{n ≥ k} c8² exp(−λ_n t + 2c9 λ_n^q). `None` when the summand is
    /// not yet decreasing at n = k, or the integral diverges.
    pub fn bound(&self, k: usize, t: f64) -> Option<f64> {
        if k < 2 {
            return None;
        }
        let l = self.growth.eval(k as f64);
        if l <= 0.0 {
            return None;
        }
        // d/dλ (−λt + 2c9 λ^q) < 0 from λ = L(k) on, hence for all n ≥ k
        if self.c9 > 0.0 && t <= 2.0 * self.c9 * self.q * l.powf(self.q - 1.0) {
            return None;
        }
        let kf = k as f64;
        let log_head = self.log_term(kf, t);
        let quad = Quadrature { rel_tol: 1e-6, abs_tol: 0.0, max_evals: 50_000 };
        // ∫_k^∞ T(x) dx, scaled by T(k); the rule itself maps x = e^v
        let r = quad.integrate(|x| (self.log_term(x, t) - log_head).exp(), Interval::HalfInfinite(kf)).ok()?;
        let total = log_head.exp() * (1.0 + r.value);
        total.is_finite().then_some(total)
    }

    /// Smallest k (searched by doubling, then bisection) whose bound is below
    /// 1e-6·value.
    pub fn required_pairs(&self, t: f64, value: f64) -> Option<usize> {
        let ok = |k: usize| self.bound(k, t).is_some_and(|b| b < TAIL_RELATIVE * value);
        let mut hi = 2usize;
        while !ok(hi) {
            hi = hi.checked_mul(2)?;
            if hi as u64 > 1 << 40 {
                return None;
            }
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatKernelSample {
    pub t: f64,
    pub x: KernelPoint,
    pub value: f64,
    /// Part of the partial sum from eigenvalues above the rounding level; it
    /// carries the time dependence once e^(−λt) is below machine precision
    /// relative to the constant mode.
    pub transient: f64,
    pub truncation_bound: f64,
    pub n_terms: usize,
}

fn point_value(e: &EigenPairSet, n: usize, x: KernelPoint) -> Result<f64, BoundsError> {
    match x {
        KernelPoint::Envelope => Ok(e.sup_norms[n]),
        KernelPoint::Node(i) => e
            .vectors
            .get(n)
            .and_then(|v| v.get(i))
            .copied()
            .ok_or_else(|| BoundsError::InvalidParameter(format!("node {i} not available in eigenvector {n}"))),
    }
}

/// Partial sum Σ_{n<k} e^(−λ_n t) f_n(x)² with a certified tail bound.
///
/// With `tail = None` the pair set is taken to be the complete spectrum and the
/// truncation bound is zero.
pub fn heat_kernel_diag(
    e: &EigenPairSet,
    t: f64,
    x: KernelPoint,
    tail: Option<&TailModel>,
) -> Result<HeatKernelSample, BoundsError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(BoundsError::InvalidParameter(format!("t = {t} must be positive")));
    }
    if e.is_empty() {
        return Err(BoundsError::InsufficientData("no eigenpairs".into()));
    }
    let zero = 1e-9 * e.eigenvalues.last().map_or(1.0, |l| l.abs().max(1.0));
    let (mut value, mut transient) = (0.0, 0.0);
    for n in 0..e.len() {
        let f = point_value(e, n, x)?;
        let term = (-e.eigenvalues[n] * t).exp() * f * f;
        value += term;
        if e.eigenvalues[n] > zero {
            transient += term;
        }
    }
    let truncation_bound = match tail {
        None => 0.0,
        Some(m) => {
            let b = m.bound(e.len(), t);
            match b {
                Some(b) if b < TAIL_RELATIVE * value => b,
                _ => {
                    return Err(BoundsError::TailUncertified {
                        available: e.len(),
                        required: m.required_pairs(t, value).unwrap_or(usize::MAX),
                        bound: b.unwrap_or(f64::INFINITY),
                        value,
                    })
                }
            }
        }
    };
    Ok(HeatKernelSample { t, x, value, transient, truncation_bound, n_terms: e.len() })
}

/// Kernel supremum over the sampled points at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSup {
    pub t: f64,
    pub value: f64,
    pub at: KernelPoint,
    pub truncation_bound: f64,
    /// sup_x K(2t, x, x)^(1/2)
    pub two_to_inf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UltracontractivityReport {
    /// Asserted exponent 1/(αβ − 1); constants (c4, c5) of K ≤ c4 exp(c5 t^(−p)).
    pub fit: Option<BoundFit>,
    pub samples: Vec<KernelSup>,
    /// Pairs (point, consecutive times) where the transient part of K failed to
    /// decrease strictly while still positive.
    pub monotonicity_violations: usize,
    pub min_value: f64,
}

impl UltracontractivityReport {
    pub fn write_csv(&self, path: &Path) -> Result<(), BoundsError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "sup_kernel", "truncation_bound", "two_to_inf"])?;
        for s in &self.samples {
            w.write_record([
                format!("{:e}", s.t),
                format!("{:.12e}", s.value),
                format!("{:.3e}", s.truncation_bound),
                format!("{:.12e}", s.two_to_inf),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples sup_x K(t, x, x) over `points` for every t, checks monotone decay at
/// every point, and fits log log sup K against log(1/t) over the times where
/// sup K > 1.
pub fn ultracontractivity_fit(
    e: &EigenPairSet,
    alpha_beta: f64,
    t_grid: &[f64],
    points: &[KernelPoint],
    tail: Option<&TailModel>,
) -> Result<UltracontractivityReport, BoundsError> {
    if !(alpha_beta > 1.0) {
        return Err(BoundsError::InvalidParameter(format!("alpha·beta = {alpha_beta} must exceed 1")));
    }
    if t_grid.is_empty() || points.is_empty() {
        return Err(BoundsError::InvalidParameter("empty time grid or point sample".into()));
    }
    let mut ts = t_grid.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut samples = Vec::with_capacity(ts.len());
    let mut per_point: Vec<Vec<f64>> = vec![Vec::with_capacity(ts.len()); points.len()];
    let mut min_value = f64::INFINITY;
    for &t in &ts {
        let mut best: Option<HeatKernelSample> = None;
        let mut best2 = 0.0f64;
        for (j, &x) in points.iter().enumerate() {
            let s = heat_kernel_diag(e, t, x, tail)?;
            per_point[j].push(s.transient);
            min_value = min_value.min(s.value);
            if best.is_none_or(|b| s.value > b.value) {
                best = Some(s);
            }
            // the 2→∞ norm needs K(2t) whose tail is smaller than at t
            let s2 = heat_kernel_diag(e, 2.0 * t, x, tail)?;
            best2 = best2.max(s2.value);
        }
        let b = best.expect("nonempty sample");
        samples.push(KernelSup { t, value: b.value, at: b.x, truncation_bound: b.truncation_bound, two_to_inf: best2.sqrt() });
    }
    let monotonicity_violations =
        per_point.iter().map(|v| v.windows(2).filter(|w| w[1] > w[0] || (w[1] == w[0] && w[0] > 0.0)).count()).sum();

    let p = 1.0 / (alpha_beta - 1.0);
    let usable: Vec<&KernelSup> = samples.iter().filter(|s| s.value > 1.0).collect();
    let fit = (usable.len() >= 2).then(|| {
        let xs: Vec<f64> = usable.iter().map(|s| (1.0 / s.t).ln()).collect();
        let ys: Vec<f64> = usable.iter().map(|s| s.value.ln().ln()).collect();
        let (_, slope, _) = linear_fit(&xs, &ys);
        // constants at the asserted exponent: log K ≈ log c4 + c5 t^(−p)
        let xa: Vec<f64> = usable.iter().map(|s| s.t.powf(-p)).collect();
        let la: Vec<f64> = usable.iter().map(|s| s.value.ln()).collect();
        let (a, b, _) = linear_fit(&xa, &la);
        let residual = xa
            .iter()
            .zip(&la)
            .map(|(x, l)| (1.0 - (a + b * x - l).exp()).max(0.0))
            .fold(0.0, f64::max);
        let c5 = b.max(0.0);
        let c4 = samples.iter().map(|s| s.value * (-c5 * s.t.powf(-p)).exp()).fold(0.0, f64::max);
        let first = ts.iter().position(|&t| t == usable[0].t).expect("sampled time");
        let last = ts.iter().position(|&t| t == usable[usable.len() - 1].t).expect("sampled time");
        BoundFit { asserted_exponent: p, fitted_exponent: slope, constants: (c4, c5), residual, window: (first, last) }
    });
    Ok(UltracontractivityReport { fit, samples, monotonicity_violations, min_value })
}

/// Lower bound for ‖e^(−Ht)‖_{2→∞} on the span of the pairs: from `starts`
/// random coefficient vectors, alternate between the maximizing node of
/// |e^(−Ht)f| and the coefficient vector that is optimal for that node.
pub fn two_to_inf_search(e: &EigenPairSet, t: f64, starts: usize, seed: u64) -> Result<f64, BoundsError> {
    let dim = e.dimension();
    if dim == 0 {
        return Err(BoundsError::InsufficientData("eigenvectors are required".into()));
    }
    let damp: Vec<f64> = e.eigenvalues.iter().map(|l| (-l * t).exp()).collect();
    let apply = |c: &[f64]| -> (usize, f64) {
        let mut u = vec![0.0; dim];
        for ((v, d), cn) in e.vectors.iter().zip(&damp).zip(c) {
            let s = d * cn;
            u.iter_mut().zip(v).for_each(|(ui, vi)| *ui += s * vi);
        }
        u.iter().enumerate().fold((0, 0.0f64), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc })
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..starts {
        let mut c: Vec<f64> = (0..e.len()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let mut prev = 0.0;
        for _ in 0..50 {
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c.iter_mut().for_each(|x| *x /= norm);
            let (node, val) = apply(&c);
            best = best.max(val);
            if val <= prev * (1.0 + 1e-14) {
                break;
            }
            prev = val;
            c = e.vectors.iter().zip(&damp).map(|(v, d)| d * v[node]).collect();
        }
    }
    Ok(best)
}

/// c10 = 2^((α+1)/(α−1)) c9^(α/(α−1))
pub fn estbasic_c10(c9: f64, alpha: f64) -> f64 {
    2f64.powf((alpha + 1.0) / (alpha - 1.0)) * c9.powf(alpha / (alpha - 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstbasicReport {
    pub alpha: f64,
    pub c9: f64,
    pub c10: f64,
    pub checked: usize,
    pub violations: usize,
    /// Smallest log-domain margin rhs − lhs over the grid.
    pub min_margin: f64,
}

/// Checks −λt/2 + 2c9 λ^(1/α) ≤ c10 t^(−1/(α−1)) on the (λ, t) grid, in the
/// logarithmic domain.
pub fn estbasic_check(c9: f64, alpha: f64, lambdas: &[f64], ts: &[f64]) -> Result<EstbasicReport, BoundsError> {
    if !(alpha > 1.0) || !(c9 >= 0.0) {
        return Err(BoundsError::InvalidParameter(format!("alpha = {alpha}, c9 = {c9}")));
    }
    let c10 = estbasic_c10(c9, alpha);
    let (mut checked, mut violations, mut min_margin) = (0, 0, f64::INFINITY);
    for &l in lambdas {
        for &t in ts {
            let lhs = -0.5 * l * t + 2.0 * c9 * l.powf(1.0 / alpha);
            let rhs = c10 * t.powf(-1.0 / (alpha - 1.0));
            let margin = rhs - lhs;
            checked += 1;
            if margin < -1e-12 * rhs.abs().max(1.0) {
                violations += 1;
            }
            min_margin = min_margin.min(margin);
        }
    }
    Ok(EstbasicReport { alpha, c9, c10, checked, violations, min_margin })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c10_at_alpha_two() {
        assert_eq!(estbasic_c10(1.0, 2.0), 8.0);
        let r = estbasic_check(1.0, 2.0, &[4.0], &[1.0]).unwrap();
        // e² ≤ e⁸
        assert!((r.min_margin - 6.0).abs() < 1e-12);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn zero_eigenvalue_gives_unit_left_side() {
        let r = estbasic_check(2.0, 3.0, &[0.0], &[1e-4, 1.0]).unwrap();
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn single_constant_mode() {
        let area: f64 = 0.6;
        let e = EigenPairSet::from_parts(vec![0.0], vec![vec![area.powf(-0.5); 3]], vec![area.powf(-0.5)]).unwrap();
        for t in [1e-3, 1.0, 100.0] {
            let s = heat_kernel_diag(&e, t, KernelPoint::Node(1), None).unwrap();
            assert!((s.value - 1.0 / area).abs() < 1e-14);
        }
    }

    #[test]
    fn tail_bound_requires_decay() {
        let m = TailModel { growth: GrowthLaw { c6: 1.0, c7: 2.0, exponent: 2.0 }, c8: 1.0, c9: 1.0, q: 0.5 };
        // at tiny t the summand still increases with λ
        assert!(m.bound(10, 1e-3).is_none());
        let b = m.bound(1000, 1.0).unwrap();
        assert!(b > 0.0 && b < 1.0);
        assert!(m.bound(2000, 1.0).unwrap() < b);
    }
}
