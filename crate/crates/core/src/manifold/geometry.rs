use std::f64::consts::PI;
use std::path::Path;

use super::{ManifoldError, U_MIN};
use crate::linalg::{double_exponential, Interval, Quadrature};

fn check_u(u: f64) -> Result<(), ManifoldError> {
    if !(u > 1.0 && u.is_finite()) {
        return Err(ManifoldError::Domain(format!("u = {u} must exceed 1")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<(), ManifoldError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(ManifoldError::InvalidParameter(format!("alpha = {alpha} must be finite and ≥ 0")));
    }
    Ok(())
}

/// g(u) = u⁻²(log u)^(−α)
pub fn metric_eval(alpha: f64, u: f64) -> Result<f64, ManifoldError> {
    check_alpha(alpha)?;
    check_u(u)?;
    Ok(u.powi(-2) * u.ln().powf(-alpha))
}

/// g′(u) = −g(u)(2/u + α/(u log u))
pub fn metric_derivative(alpha: f64, u: f64) -> Result<f64, ManifoldError> {
    let g = metric_eval(alpha, u)?;
    Ok(-g * (2.0 / u + alpha / (u * u.ln())))
}

/// Distance from {u = u0} to the cusp at u = ∞: (2/(α−2))(log u0)^(1−α/2).
pub fn cusp_distance(alpha: f64, u0: f64) -> Result<f64, ManifoldError> {
    if !(alpha > 2.0 && alpha.is_finite()) {
        return Err(ManifoldError::InvalidParameter(format!(
            "alpha = {alpha}: the cusp is at finite distance only for alpha > 2"
        )));
    }
    check_u(u0)?;
    Ok(2.0 / (alpha - 2.0) * u0.ln().powf(1.0 - alpha / 2.0))
}

/// ∫_{u0}^∞ g^{1/2} du by adaptive quadrature, to relative tolerance `rel_tol`.
pub fn cusp_distance_quad(alpha: f64, u0: f64, rel_tol: f64) -> Result<f64, ManifoldError> {
    cusp_distance(alpha, u0)?;
    // after v = log u the integrand is v^(−α/2) on [log u0, ∞)
    let r = Quadrature::relative(rel_tol)
        .integrate(|v| v.powf(-alpha / 2.0), Interval::HalfInfinite(u0.ln()))?;
    Ok(r.value)
}

/// Volume of the ball of radius ε about the cusp, with two asymptotic forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallVolume {
    pub alpha: f64,
    pub eps: f64,
    /// η(ε) = exp(κ^(−1/κ) ε^(−1/κ)), κ = (α − 2)/2
    pub log_eta: f64,
    /// 2π ∫_η^∞ u⁻²(log u)^(−α) du by adaptive Gauss–Kronrod
    pub quad_value: f64,
    /// the same integral by exp-sinh quadrature in the original variable
    pub second_value: f64,
    /// exp(−κ^(−1/κ)ε^(−1/κ))(κε)^(−1/κ), no angular factor
    pub leading_asymptotic: f64,
    /// 2π(log η)^(−α)/η
    pub my_asymptotic: f64,
}

impl BallVolume {
    pub fn cross_check_error(&self) -> f64 {
        (self.quad_value - self.second_value).abs() / self.quad_value.abs()
    }

    pub fn ratio_to_proof_asymptotic(&self) -> f64 {
        self.quad_value / self.my_asymptotic
    }

    pub fn ratio_to_leading_asymptotic(&self) -> f64 {
        self.quad_value / self.leading_asymptotic
    }
}

pub fn ball_volume(alpha: f64, eps: f64) -> Result<BallVolume, ManifoldError> {
    let reach = cusp_distance(alpha, U_MIN)?;
    if !(eps > 0.0 && eps < reach) {
        return Err(ManifoldError::Domain(format!(
            "radius {eps} must lie in (0, {reach}), the distance from u = 2π to the cusp"
        )));
    }
    let kappa = (alpha - 2.0) / 2.0;
    let log_eta = (kappa * eps).powf(-1.0 / kappa);
    let quad = Quadrature::relative(1e-12)
        .integrate(|v| (log_eta - v).exp() * v.powf(-alpha), Interval::HalfInfinite(log_eta))?;
    // the scaled integrand e^(log η − v) keeps values O(1); undo the scaling
    let quad_value = 2.0 * PI * quad.value * (-log_eta).exp();
    let second = double_exponential(
        |t| {
            // u = η·t, t ≥ 1, integrand scaled by η
            let lu = log_eta + t.ln();
            t.powi(-2) * lu.powf(-alpha)
        },
        Interval::HalfInfinite(1.0),
        1e-12,
    )?;
    let second_value = 2.0 * PI * second.value * (-log_eta).exp();
    let leading_asymptotic = (-log_eta).exp() * (kappa * eps).powf(-1.0 / kappa);
    let my_asymptotic = 2.0 * PI * log_eta.powf(-alpha) * (-log_eta).exp();
    Ok(BallVolume { alpha, eps, log_eta, quad_value, second_value, leading_asymptotic, my_asymptotic })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddedPoint {
    pub u: f64,
    pub theta: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// (|g′|/2g)² at u; the embedding needs this below 1.
fn slope_ratio(alpha: f64, u: f64) -> f64 {
    1.0 / u + alpha / (2.0 * u * u.ln())
}

fn z_prime(alpha: f64, u: f64) -> f64 {
    let q = slope_ratio(alpha, u);
    let g = u.powi(-2) * u.ln().powf(-alpha);
    (g * (1.0 - q * q)).max(0.0).sqrt()
}

/// Surface of revolution x = g^{1/2}cos θ, y = g^{1/2}sin θ, z = ∫_{2π}^u z′.
pub fn embed_r3(alpha: f64, u: f64, theta: f64) -> Result<EmbeddedPoint, ManifoldError> {
    check_alpha(alpha)?;
    if !(u >= U_MIN && u.is_finite()) {
        return Err(ManifoldError::Domain(format!("u = {u} below 2π")));
    }
    let ratio = slope_ratio(alpha, u);
    if ratio >= 1.0 {
        return Err(ManifoldError::Embedding { u, ratio });
    }
    let z = if u > U_MIN {
        // in v = log u the integrand is e^v z′(e^v), smooth and slowly varying
        Quadrature::relative(1e-12)
            .integrate(|v| v.exp() * z_prime(alpha, v.exp()), Interval::Finite(U_MIN.ln(), u.ln()))?
            .value
    } else {
        0.0
    };
    let r = metric_eval(alpha, u)?.sqrt();
    let (s, c) = theta.sin_cos();
    Ok(EmbeddedPoint { u, theta, x: r * c, y: if theta == 0.0 { 0.0 } else { r * s }, z })
}

/// Embedding on a tensor grid of u values and angles.
pub fn embedding_cloud(alpha: f64, us: &[f64], thetas: &[f64]) -> Result<Vec<EmbeddedPoint>, ManifoldError> {
    let mut out = Vec::with_capacity(us.len() * thetas.len());
    for &u in us {
        let base = embed_r3(alpha, u, 0.0)?;
        let r = base.x;
        for &theta in thetas {
            let (s, c) = theta.sin_cos();
            out.push(EmbeddedPoint { u, theta, x: r * c, y: if theta == 0.0 { 0.0 } else { r * s }, z: base.z });
        }
    }
    Ok(out)
}

pub fn write_embedding_csv(points: &[EmbeddedPoint], path: &Path) -> Result<(), ManifoldError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["u", "theta", "x", "y", "z"])?;
    for p in points {
        w.write_record([p.u, p.theta, p.x, p.y, p.z].map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn metric_closed_forms() {
        assert!((metric_eval(2.0, E).unwrap() - E.powi(-2)).abs() < 1e-15);
        assert!((metric_eval(0.0, 10.0).unwrap() - 0.01).abs() < 1e-15);
        assert!((metric_eval(1.0, E * E).unwrap() - E.powi(-4) / 2.0).abs() < 1e-15);
        assert!(metric_eval(1.0, 1.0).is_err());
        assert!(metric_eval(1.0, 0.5).is_err());
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let (a, u, h) = (1.5, 40.0, 1e-4);
        let fd = (metric_eval(a, u + h).unwrap() - metric_eval(a, u - h).unwrap()) / (2.0 * h);
        assert!((metric_derivative(a, u).unwrap() - fd).abs() < 1e-9 * fd.abs());
    }

    #[test]
    fn cusp_distance_examples() {
        assert!((cusp_distance(4.0, E * E).unwrap() - 0.5).abs() < 1e-15);
        assert!((cusp_distance(4.0, E.powi(4)).unwrap() - 0.25).abs() < 1e-15);
        assert!(cusp_distance(2.0, 10.0).is_err());
        let mut prev = f64::INFINITY;
        for k in 1..20 {
            let d = cusp_distance(3.0, 10f64.powi(k)).unwrap();
            assert!(d < prev && d > 0.0);
            prev = d;
        }
    }

    #[test]
    fn ball_volume_rejects_large_radius() {
        let reach = cusp_distance(4.0, U_MIN).unwrap();
        assert!(ball_volume(4.0, reach * 1.01).is_err());
        assert!(ball_volume(4.0, 0.0).is_err());
    }

    #[test]
    fn embedding_identities() {
        let p = embed_r3(2.0, 50.0, 0.0).unwrap();
        assert_eq!(p.y, 0.0);
        let q = embed_r3(2.0, 50.0, 1.1).unwrap();
        let g = metric_eval(2.0, 50.0).unwrap();
        assert!((q.x * q.x + q.y * q.y - g).abs() <= 4.0 * f64::EPSILON * g);
        assert_eq!(embed_r3(2.0, U_MIN, 0.3).unwrap().z, 0.0);
    }
}
