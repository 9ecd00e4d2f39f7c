use super::{ManifoldError, ManifoldModel};
use crate::linalg::{Interval, Quadrature};

/// λ = 0 solutions of the radial equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    /// φ₁ = 1 (n = 0)
    Phi1,
    /// φ₂ = u (n = 0)
    Phi2,
    /// ψ₁ = e^(−nu)
    Psi1,
    /// ψ₂ = e^(nu)
    Psi2,
}

impl Candidate {
    pub fn name(self) -> &'static str {
        match self {
            Self::Phi1 => "phi1",
            Self::Phi2 => "phi2",
            Self::Psi1 => "psi1",
            Self::Psi2 => "psi2",
        }
    }

    pub fn expected(self) -> Verdict {
        match self {
            Self::Phi1 | Self::Psi1 => Verdict::InL2,
            Self::Phi2 | Self::Psi2 => Verdict::NotInL2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    InL2,
    NotInL2,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateReport {
    pub candidate: Candidate,
    pub truncations: Vec<f64>,
    /// log ∫_{u_min}^U |φ|² g du for each truncation
    pub log_norms: Vec<f64>,
    /// ratio of the last two truncated norms
    pub last_ratio: f64,
    pub verdict: Verdict,
}

impl CandidateReport {
    pub fn matches_expectation(&self) -> bool {
        self.verdict == self.candidate.expected()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointReport {
    pub alpha: f64,
    pub n_mode: u32,
    pub candidates: Vec<CandidateReport>,
}

impl EndpointReport {
    /// ∞ is limit point when exactly one solution of each pair is square integrable.
    pub fn limit_point(&self) -> bool {
        let in_l2 = self.candidates.iter().filter(|c| c.verdict == Verdict::InL2).count();
        let out = self.candidates.iter().filter(|c| c.verdict == Verdict::NotInL2).count();
        in_l2 == 1 && out == 1
    }
}

/// Relative change below which a sequence of truncated norms counts as converged.
const CONVERGED: f64 = 0.01;
/// Growth factor above which it counts as divergent.
const DIVERGENT: f64 = 2.0;

fn log_norm(c: Candidate, alpha: f64, n: f64, u_min: f64, u_max: f64) -> Result<f64, ManifoldError> {
    let q = Quadrature::relative(1e-12);
    let g = |u: f64| u.powi(-2) * u.ln().powf(-alpha);
    let (v0, v1) = (u_min.ln(), u_max.ln());
    let value = match c {
        // ∫ e^(−v) v^(−α) dv, scaled by e^(v0)
        Candidate::Phi1 => {
            let r = q.integrate(|v| (v0 - v).exp() * v.powf(-alpha), Interval::Finite(v0, v1))?;
            r.value.ln() - v0
        }
        // ∫ e^(v) v^(−α) dv, scaled by e^(−v1)
        Candidate::Phi2 => {
            let r = q.integrate(|v| (v - v1).exp() * v.powf(-alpha), Interval::Finite(v0, v1))?;
            r.value.ln() + v1
        }
        // e^(−2nu) g, scaled by e^(2n u_min); beyond 400/n past u_min it is below e^(−800)
        Candidate::Psi1 => {
            let end = u_max.min(u_min + 400.0 / n);
            let r = q.integrate(|u| (-2.0 * n * (u - u_min)).exp() * g(u), Interval::Finite(u_min, end))?;
            r.value.ln() - 2.0 * n * u_min
        }
        // e^(2nu) g, scaled by e^(−2n U)
        Candidate::Psi2 => {
            let start = u_min.max(u_max - 400.0 / n);
            let r = q.integrate(|u| (2.0 * n * (u - u_max)).exp() * g(u), Interval::Finite(start, u_max))?;
            r.value.ln() + 2.0 * n * u_max
        }
    };
    Ok(value)
}

/// Truncated weighted norms of the λ = 0 solutions for the model's α and angular
/// mode, with a verdict on square integrability at ∞.
pub fn endpoint_classify(m: &ManifoldModel, truncations: &[f64]) -> Result<EndpointReport, ManifoldError> {
    if truncations.len() < 2 || truncations.windows(2).any(|w| w[1] <= w[0]) || truncations[0] <= m.u_min {
        return Err(ManifoldError::InvalidParameter(
            "need at least two increasing truncation points above u_min".into(),
        ));
    }
    let pair = if m.n_mode == 0 { [Candidate::Phi1, Candidate::Phi2] } else { [Candidate::Psi1, Candidate::Psi2] };
    let n = m.n_mode as f64;
    let mut candidates = Vec::new();
    for c in pair {
        let log_norms = truncations
            .iter()
            .map(|&u| log_norm(c, m.alpha, n, m.u_min, u))
            .collect::<Result<Vec<_>, _>>()?;
        let k = log_norms.len();
        let last_ratio = (log_norms[k - 1] - log_norms[k - 2]).exp();
        let verdict = if (last_ratio - 1.0).abs() < CONVERGED {
            Verdict::InL2
        } else if last_ratio > DIVERGENT {
            Verdict::NotInL2
        } else {
            Verdict::Inconclusive
        };
        candidates.push(CandidateReport { candidate: c, truncations: truncations.to_vec(), log_norms, last_ratio, verdict });
    }
    Ok(EndpointReport { alpha: m.alpha, n_mode: m.n_mode, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Boundary;

    #[test]
    fn exponential_solution_norm_does_not_overflow() {
        let m = ManifoldModel::new(1.0, 2, Boundary::Neumann, 1e6).unwrap();
        let r = endpoint_classify(&m, &[1e3, 1e6]).unwrap();
        let psi2 = &r.candidates[1];
        assert!(psi2.log_norms.iter().all(|l| l.is_finite()));
        assert!(psi2.log_norms[1] > 3.9e6);
    }

    #[test]
    fn truncations_must_increase() {
        let m = ManifoldModel::new(1.0, 0, Boundary::Neumann, 1e6).unwrap();
        assert!(endpoint_classify(&m, &[1e4, 1e3]).is_err());
        assert!(endpoint_classify(&m, &[1e4]).is_err());
    }
}
