use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GeometryError;

/// Shape of the boundary graph over the base interval.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileForm {
    /// g(r) = A·|log|r||^(−α), g(0) = 0.
    Canonical,
    /// g ≡ height (the degenerate, cusp-free case).
    Constant { height: f64 },
    /// Piecewise-linear interpolation of (x, y) samples sorted by x. A repeated
    /// abscissa encodes a jump; the right-hand value applies at the jump point.
    Sampled { xs: Vec<f64>, ys: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuspProfile {
    pub a: f64,
    pub alpha: f64,
    pub form: ProfileForm,
}

pub const BASE_HALF_WIDTH: f64 = 0.5;

impl CuspProfile {
    pub fn canonical(a: f64, alpha: f64) -> Result<Self, GeometryError> {
        if !(a > 0.0 && a.is_finite()) || !(alpha > 0.0 && alpha.is_finite()) {
            return Err(GeometryError::InvalidParameter(format!(
                "profile needs A > 0 and alpha > 0 (got A = {a}, alpha = {alpha})"
            )));
        }
        Ok(Self { a, alpha, form: ProfileForm::Canonical })
    }

    pub fn constant(height: f64) -> Result<Self, GeometryError> {
        if !(height > 0.0 && height.is_finite()) {
            return Err(GeometryError::InvalidParameter(format!("constant height {height}")));
        }
        Ok(Self { a: 0.0, alpha: 1.0, form: ProfileForm::Constant { height } })
    }

    pub fn sampled(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, GeometryError> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(GeometryError::InvalidParameter("sampled profile needs ≥ 2 matching samples".into()));
        }
        if xs.windows(2).any(|w| w[1] < w[0]) || xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidParameter("sample abscissae must be finite and sorted".into()));
        }
        if xs[0] > -BASE_HALF_WIDTH || *xs.last().unwrap() < BASE_HALF_WIDTH {
            return Err(GeometryError::InvalidParameter("samples must cover [-1/2, 1/2]".into()));
        }
        Ok(Self { a: 0.0, alpha: 1.0, form: ProfileForm::Sampled { xs, ys } })
    }

    /// Evaluates g(r) without range checks.
    pub(crate) fn eval_unchecked(&self, r: f64) -> f64 {
        match &self.form {
            ProfileForm::Canonical => {
                let ar = r.abs();
                if ar == 0.0 {
                    0.0
                } else {
                    self.a * (-ar.ln()).powf(-self.alpha)
                }
            }
            ProfileForm::Constant { height } => *height,
            ProfileForm::Sampled { xs, ys } => {
                // last index with xs[i] <= r
                let i = xs.partition_point(|&x| x <= r);
                if i == 0 {
                    return ys[0];
                }
                if i == xs.len() {
                    return ys[xs.len() - 1];
                }
                let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
                if x1 == x0 {
                    y1
                } else {
                    y0 + (y1 - y0) * (r - x0) / (x1 - x0)
                }
            }
        }
    }

    /// Inverse width for the canonical profile: the |r| at which g(r) = y.
    pub fn inverse_width(&self, y: f64) -> Option<f64> {
        match self.form {
            ProfileForm::Canonical if y > 0.0 => Some((-(self.a / y).powf(1.0 / self.alpha)).exp()),
            _ => None,
        }
    }

    /// Breakpoints of a sampled profile (jumps included), the tip for the
    /// canonical one, nothing for a constant.
    pub fn special_points(&self) -> Vec<f64> {
        match &self.form {
            ProfileForm::Canonical => vec![0.0],
            ProfileForm::Constant { .. } => Vec::new(),
            ProfileForm::Sampled { xs, .. } => xs.clone(),
        }
    }

    pub fn max_height(&self) -> f64 {
        match &self.form {
            ProfileForm::Canonical => self.eval_unchecked(BASE_HALF_WIDTH),
            ProfileForm::Constant { height } => *height,
            ProfileForm::Sampled { ys, .. } => ys.iter().copied().fold(f64::MIN, f64::max),
        }
    }
}

/// g(r) for |r| ≤ 1/2.
pub fn profile_eval(p: &CuspProfile, r: f64) -> Result<f64, GeometryError> {
    if !(r.abs() <= BASE_HALF_WIDTH) {
        return Err(GeometryError::OutOfRange { r });
    }
    Ok(p.eval_unchecked(r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusReport {
    /// max |g(x′)−g(y′)|·|log|x′−y′||^α over all evaluated pairs
    pub a_eff: f64,
    pub worst_pair: (f64, f64),
    pub pairs_evaluated: usize,
    pub pairs_skipped: usize,
    /// the same maximum restricted to separations ≥ 10⁻⁶ and < 10⁻⁹
    pub a_eff_coarse: f64,
    pub a_eff_fine: f64,
    /// false when the fine-scale maximum exceeds the coarse one by more than
    /// 25%, which signals a constant that diverges as pairs approach each other
    pub pass: bool,
}

/// Samples `n_pairs` random pairs (log-uniform separations down to 10⁻¹²),
/// plus pairs straddling every special point of the profile at each separation
/// 10⁻¹ … 10⁻¹², and reports the effective modulus constant.
pub fn modulus_check(p: &CuspProfile, n_pairs: usize, seed: u64) -> Result<ModulusReport, GeometryError> {
    if n_pairs == 0 {
        return Err(GeometryError::InvalidParameter("n_pairs must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_pairs + 64);
    for _ in 0..n_pairs {
        let x: f64 = rng.gen_range(-BASE_HALF_WIDTH..=BASE_HALF_WIDTH);
        let delta = 10f64.powf(-rng.gen_range(0.0..12.0));
        let y = if rng.gen_bool(0.5) { x + delta } else { x - delta };
        pairs.push((x, y.clamp(-BASE_HALF_WIDTH, BASE_HALF_WIDTH)));
    }
    for c in p.special_points() {
        for k in 1..=12 {
            let delta = 10f64.powi(-k);
            pairs.push((c - 0.5 * delta, c + 0.5 * delta));
            pairs.push((c, c + delta));
            pairs.push((c - delta, c));
        }
    }
    let alpha = p.alpha;
    let mut report = ModulusReport {
        a_eff: 0.0,
        worst_pair: (0.0, 0.0),
        pairs_evaluated: 0,
        pairs_skipped: 0,
        a_eff_coarse: 0.0,
        a_eff_fine: 0.0,
        pass: true,
    };
    for (x, y) in pairs {
        if !(x.abs() <= BASE_HALF_WIDTH && y.abs() <= BASE_HALF_WIDTH) || x == y {
            report.pairs_skipped += 1;
            continue;
        }
        let sep = (x - y).abs();
        let value = (p.eval_unchecked(x) - p.eval_unchecked(y)).abs() * (-sep.ln()).max(0.0).powf(alpha);
        report.pairs_evaluated += 1;
        if value > report.a_eff {
            report.a_eff = value;
            report.worst_pair = (x, y);
        }
        if sep >= 1e-6 {
            report.a_eff_coarse = report.a_eff_coarse.max(value);
        } else if sep < 1e-9 {
            report.a_eff_fine = report.a_eff_fine.max(value);
        }
    }
    report.pass = report.a_eff.is_finite() && report.a_eff_fine <= 1.25 * report.a_eff_coarse.max(f64::MIN_POSITIVE);
    if report.a_eff == 0.0 {
        report.pass = true;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn canonical_values() {
        let p = CuspProfile::canonical(1.0, 2.0).unwrap();
        assert!((profile_eval(&p, (-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(profile_eval(&p, 0.0).unwrap(), 0.0);
        let q = CuspProfile::canonical(2.0, 1.0).unwrap();
        assert!((profile_eval(&q, E.powi(-4)).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(profile_eval(&p, 0.6), Err(GeometryError::OutOfRange { .. })));
    }

    #[test]
    fn even_and_monotone() {
        let p = CuspProfile::canonical(1.0, 2.0).unwrap();
        let mut last = 0.0;
        for i in 1..=500 {
            let r = 0.5 * i as f64 / 500.0;
            let g = profile_eval(&p, r).unwrap();
            assert_eq!(g, profile_eval(&p, -r).unwrap());
            assert!(g >= last);
            last = g;
        }
    }

    #[test]
    fn inverse_width_round_trip() {
        let p = CuspProfile::canonical(1.5, 2.5).unwrap();
        for y in [0.01, 0.05, 0.1] {
            let r = p.inverse_width(y).unwrap();
            assert!((p.eval_unchecked(r) - y).abs() < 1e-13);
        }
    }

    #[test]
    fn modulus_constant_and_jump() {
        let c = CuspProfile::constant(1.0).unwrap();
        let r = modulus_check(&c, 1000, 1).unwrap();
        assert_eq!(r.a_eff, 0.0);
        assert!(r.pass);
        let jump = CuspProfile::sampled(vec![-0.5, 0.1, 0.1, 0.5], vec![0.5, 0.5, 0.8, 0.8]).unwrap();
        let r = modulus_check(&jump, 1000, 1).unwrap();
        assert!(!r.pass, "{r:?}");
        assert!(r.a_eff > 0.3 * 27.0f64.powi(1));
        let canon = CuspProfile::canonical(1.0, 2.0).unwrap();
        let r = modulus_check(&canon, 10_000, 1).unwrap();
        assert!(r.pass && r.a_eff.is_finite(), "{r:?}");
    }

    #[test]
    fn sampled_interpolation() {
        let p = CuspProfile::sampled(vec![-0.5, 0.0, 0.5], vec![1.0, 0.0, 1.0]).unwrap();
        assert!((p.eval_unchecked(0.25) - 0.5).abs() < 1e-15);
        assert!((p.eval_unchecked(-0.5) - 1.0).abs() < 1e-15);
    }
}
