use super::{linear_fit, minimize_1d, BoundsError};
use crate::linalg::EigenPairSet;

/// A fitted bound with its certificate window.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundFit {
    /// The exponent the bound is stated with.
    pub asserted_exponent: f64,
    /// Least-squares exponent.
    pub fitted_exponent: f64,
    /// Constants of the bound at the asserted exponent, chosen so that the
    /// window has zero violations.
    pub constants: (f64, f64),
    /// Largest relative violation of the least-squares curve on the window.
    pub residual: f64,
    /// First and last eigen-index of the window (inclusive).
    pub window: (usize, usize),
}

/// λ_n ≥ c6 (log(c7 n))^p
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthLaw {
    pub c6: f64,
    pub c7: f64,
    pub exponent: f64,
}

impl GrowthLaw {
    pub fn eval(&self, n: f64) -> f64 {
        let l = (self.c7 * n).ln();
        if l <= 0.0 {
            0.0
        } else {
            self.c6 * l.powf(self.exponent)
        }
    }
}

/// Indices n ≥ 1 with λ_n ≥ 1 (the eigen-index n counts from 0, the constant mode).
fn growth_window(e: &EigenPairSet) -> Option<(usize, usize)> {
    let first = e.eigenvalues.iter().enumerate().position(|(n, &l)| n >= 1 && l >= 1.0)?;
    Some((first, e.len() - 1))
}

/// Least-squares fit of log λ_n = log c6 + p log log(c7 n) with c7 chosen by a
/// one-dimensional search; returns (p, log c6, c7, sse).
fn fit_log_power(ns: &[f64], lambdas: &[f64]) -> (f64, f64, f64, f64) {
    let ys: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let n_min = ns[0];
    let sse = |log_c7: f64| {
        let c7 = log_c7.exp();
        let xs: Vec<f64> = ns.iter().map(|n| (c7 * n).ln().ln()).collect();
        linear_fit(&xs, &ys).2
    };
    // c7·n_min must exceed 1 for the double logarithm
    let lo = -n_min.ln() + 1e-3;
    let log_c7 = minimize_1d(sse, lo, lo + 16.0);
    let c7 = log_c7.exp();
    let xs: Vec<f64> = ns.iter().map(|n| (c7 * n).ln().ln()).collect();
    let (a, b, s) = linear_fit(&xs, &ys);
    (b, a, c7, s)
}

/// Fit of λ_n ≥ c6 (log(c7 n))^α. Needs at least 20 eigenvalues ≥ 1.
pub fn eigen_growth_fit(e: &EigenPairSet, alpha: f64) -> Result<BoundFit, BoundsError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(BoundsError::InvalidParameter(format!("alpha = {alpha}")));
    }
    let window = growth_window(e).filter(|w| w.1 + 1 - w.0 >= 20).ok_or_else(|| {
        BoundsError::InsufficientData("eigenvalue growth fit needs at least 20 eigenvalues ≥ 1".into())
    })?;
    let ns: Vec<f64> = (window.0..=window.1).map(|n| n as f64).collect();
    let lambdas = &e.eigenvalues[window.0..=window.1];
    let (p, log_c6, c7, _) = fit_log_power(&ns, lambdas);
    let residual = ns
        .iter()
        .zip(lambdas)
        .map(|(n, l)| ((log_c6.exp() * (c7 * n).ln().powf(p) - l) / l).max(0.0))
        .fold(0.0, f64::max);
    let c6 = certified_c6(&ns, lambdas, c7, alpha);
    Ok(BoundFit { asserted_exponent: alpha, fitted_exponent: p, constants: (c6, c7), residual, window })
}

/// Largest c6 with λ_n ≥ c6 (log(c7 n))^p on the window.
fn certified_c6(ns: &[f64], lambdas: &[f64], c7: f64, p: f64) -> f64 {
    ns.iter().zip(lambdas).map(|(n, l)| l / (c7 * n).ln().powf(p)).fold(f64::INFINITY, f64::min)
}

impl BoundFit {
    /// The certified growth law at the fitted exponent, for series tails.
    pub fn growth_law_at_fitted(&self, e: &EigenPairSet) -> GrowthLaw {
        let (c7, p) = (self.constants.1, self.fitted_exponent);
        let ns: Vec<f64> = (self.window.0..=self.window.1).map(|n| n as f64).collect();
        let c6 = certified_c6(&ns, &e.eigenvalues[self.window.0..=self.window.1], c7, p);
        GrowthLaw { c6, c7, exponent: p }
    }
}

/// Number of n with ‖f_n‖∞ > c8 (n below the window) or > c8·exp(c9 λ_n^{1/α}).
pub fn supnorm_violations(e: &EigenPairSet, alpha: f64, c8: f64, c9: f64) -> usize {
    let start = e.eigenvalues.iter().position(|&l| l >= 1.0).unwrap_or(e.len());
    e.sup_norms
        .iter()
        .zip(&e.eigenvalues)
        .enumerate()
        .filter(|(n, (s, l))| {
            let bound = if *n < start { c8 } else { c8 * (c9 * l.powf(1.0 / alpha)).exp() };
            **s > bound * (1.0 + 1e-12)
        })
        .count()
}

/// Fit of ‖f_n‖∞ ≤ c8 exp(c9 λ_n^{1/α}). The fitted exponent is q in
/// log‖f_n‖∞ = log c8 + c9 λ_n^q; the asserted one is 1/α.
pub fn supnorm_bound_fit(e: &EigenPairSet, alpha: f64) -> Result<BoundFit, BoundsError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(BoundsError::InvalidParameter(format!("alpha = {alpha}")));
    }
    if e.is_empty() {
        return Err(BoundsError::InsufficientData("no eigenpairs".into()));
    }
    let start = e.eigenvalues.iter().position(|&l| l >= 1.0).ok_or_else(|| {
        BoundsError::InsufficientData("sup-norm fit needs eigenvalues ≥ 1".into())
    })?;
    let window = (start, e.len() - 1);
    let lambdas = &e.eigenvalues[start..];
    let ys: Vec<f64> = e.sup_norms[start..].iter().map(|s| s.ln()).collect();
    let q_asserted = 1.0 / alpha;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let spread = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>();
    let q = if ys.len() < 3 || spread < 1e-20 {
        q_asserted
    } else {
        let sse = |log_q: f64| {
            let xs: Vec<f64> = lambdas.iter().map(|l| l.powf(log_q.exp())).collect();
            linear_fit(&xs, &ys).2
        };
        minimize_1d(sse, (0.02f64).ln(), 4f64.ln()).exp()
    };
    let xs: Vec<f64> = lambdas.iter().map(|l| l.powf(q)).collect();
    let (a, b, _) = linear_fit(&xs, &ys);
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let fit = (a + b * x).exp();
            let s = y.exp();
            ((s - fit) / s).max(0.0)
        })
        .fold(0.0, f64::max);
    // constants at the asserted exponent
    let xs_a: Vec<f64> = lambdas.iter().map(|l| l.powf(q_asserted)).collect();
    let c9 = if spread < 1e-20 { 0.0 } else { linear_fit(&xs_a, &ys).1.max(0.0) };
    let c8 = e
        .sup_norms
        .iter()
        .zip(&e.eigenvalues)
        .enumerate()
        .map(|(n, (s, l))| if n < start { *s } else { s * (-c9 * l.powf(q_asserted)).exp() })
        .fold(0.0, f64::max);
    let fitted_exponent = if spread < 1e-20 { q_asserted } else { q };
    Ok(BoundFit { asserted_exponent: q_asserted, fitted_exponent, constants: (c8, c9), residual, window })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize, law: impl Fn(f64) -> f64, sup: impl Fn(f64) -> f64) -> EigenPairSet {
        let ev: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { law(i as f64) }).collect();
        let s: Vec<f64> = ev.iter().map(|&l| sup(l)).collect();
        EigenPairSet::from_parts(ev, vec![], s).unwrap()
    }

    #[test]
    fn exact_log_square_growth() {
        let e = synthetic(200, |n| (2.0 * n).ln().powi(2), |_| 1.0);
        let f = eigen_growth_fit(&e, 2.0).unwrap();
        assert!((f.fitted_exponent - 2.0).abs() < 1e-6, "{f:?}");
        assert!((f.constants.1 - 2.0).abs() < 1e-5);
        assert!((f.constants.0 - 1.0).abs() < 1e-6);
        assert!(f.residual < 1e-8);
    }

    #[test]
    fn too_few_eigenvalues() {
        let e = synthetic(15, |n| n, |_| 1.0);
        assert!(matches!(eigen_growth_fit(&e, 2.0), Err(BoundsError::InsufficientData(_))));
    }

    #[test]
    fn constant_sup_norms_give_zero_rate() {
        let area: f64 = 0.7;
        let e = synthetic(40, |n| n, |_| area.powf(-0.5));
        let f = supnorm_bound_fit(&e, 2.0).unwrap();
        assert_eq!(f.constants.1, 0.0);
        assert!((f.constants.0 - area.powf(-0.5)).abs() < 1e-14);
        assert_eq!(supnorm_violations(&e, 2.0, f.constants.0, f.constants.1), 0);
    }

    #[test]
    fn exact_exponential_sup_growth() {
        let e = synthetic(120, |n| 3.0 * n, |l| 1.5 * (0.8 * l.sqrt()).exp());
        let f = supnorm_bound_fit(&e, 2.0).unwrap();
        assert!((f.fitted_exponent - 0.5).abs() < 1e-6, "{f:?}");
        assert!((f.constants.1 - 0.8).abs() < 1e-9);
        assert!((f.constants.0 - 1.5).abs() < 1e-9);
        assert_eq!(supnorm_violations(&e, 2.0, f.constants.0, f.constants.1), 0);
    }
}
