use std::path::Path;

use super::{linear_fit, BoundsError};
use crate::fem::{assemble, integrate_nodal, Forms, Mesh, WeightSpec};
use crate::geometry::{CuspDomain, DistanceKind};
use crate::linalg::{EigenPairSet, EnvelopeCholesky};

/// A mesh with its Neumann forms and the |log d| weighted mass, d being the
/// distance to the whole boundary.
#[derive(Debug, Clone)]
pub struct DiscreteSpace {
    pub mesh: Mesh,
    pub forms: Forms,
    pub area: f64,
}

impl DiscreteSpace {
    pub fn new(mesh: Mesh, domain: &CuspDomain) -> Result<Self, BoundsError> {
        let forms = assemble(&mesh, domain, &WeightSpec::log_dist(1.0, DistanceKind::Full))?;
        let area = mesh.area();
        Ok(Self { mesh, forms, area })
    }

    fn check(&self, f: &[f64]) -> Result<(), BoundsError> {
        if f.len() != self.mesh.n_nodes() {
            return Err(BoundsError::InvalidParameter(format!(
                "function has {} entries, mesh has {} nodes",
                f.len(),
                self.mesh.n_nodes()
            )));
        }
        if let Some((node, &value)) = f.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(BoundsError::NegativeFunction { node, value });
        }
        if f.iter().all(|&v| v == 0.0) {
            return Err(BoundsError::InvalidParameter("function vanishes identically".into()));
        }
        Ok(())
    }

    /// (∫f² log₊f, Q(f), ∫|log d| f²) after scaling f to unit L² norm.
    fn terms(&self, f: &[f64]) -> Result<(f64, f64, f64), BoundsError> {
        self.check(f)?;
        let norm2 = self.forms.mass.quadratic_form(f);
        let c = 1.0 / norm2.sqrt();
        let entropy = integrate_nodal(&self.mesh, f, |_, v| {
            let g = c * v;
            if g > 1.0 {
                g * g * g.ln()
            } else {
                0.0
            }
        });
        let q = self.forms.stiffness.quadratic_form(f) / norm2;
        let w = self.forms.weighted_mass.quadratic_form(f) / norm2;
        Ok((entropy, q, w))
    }
}

/// ∫f² log₊f − εQ(f) for f ≥ 0 rescaled to ‖f‖₂ = 1, where the ‖f‖² log‖f‖₂
/// term vanishes.
pub fn lsi_deficit(space: &DiscreteSpace, f: &[f64], eps: f64) -> Result<f64, BoundsError> {
    let (ent, q, _) = space.terms(f)?;
    Ok(ent - eps * q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFunction {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFamilyOptions {
    /// Nonconstant eigenfunctions to include (as |f_n| and 1 + f_n/‖f_n‖∞).
    pub n_eigen: usize,
    /// Centre of the smoothed indicators; `None` uses the domain's tip, or its
    /// centre when it has no tip.
    pub tip: Option<[f64; 2]>,
    pub tip_radius: f64,
    pub smoothing_times: Vec<f64>,
    /// Backward Euler steps per smoothing time.
    pub steps: usize,
    pub pair_maxima: bool,
}

impl Default for TrialFamilyOptions {
    fn default() -> Self {
        Self { n_eigen: 8, tip: None, tip_radius: 0.05, smoothing_times: vec![1e-1, 1e-2, 1e-3], steps: 8, pair_maxima: true }
    }
}

/// Constant, eigenfunction-based functions, heat-smoothed indicators of a disc
/// at the tip, and pointwise maxima of pairs among the smoothed indicators and
/// the first |f_n|.
pub fn default_trial_family(
    space: &DiscreteSpace,
    domain: &CuspDomain,
    pairs: Option<&EigenPairSet>,
    opts: &TrialFamilyOptions,
) -> Result<Vec<TrialFunction>, BoundsError> {
    let n = space.mesh.n_nodes();
    let mut family = vec![TrialFunction { label: "constant".into(), values: vec![1.0; n] }];
    let mut abs_eigen = Vec::new();
    if let Some(p) = pairs {
        for (i, v) in p.vectors.iter().enumerate().skip(1).take(opts.n_eigen) {
            if v.len() != n {
                return Err(BoundsError::InvalidParameter("eigenvectors do not match the mesh".into()));
            }
            let sup = p.sup_norms[i];
            let abs = TrialFunction { label: format!("abs_eigen_{i}"), values: v.iter().map(|x| x.abs()).collect() };
            if abs_eigen.len() < 3 {
                abs_eigen.push(abs.clone());
            }
            family.push(abs);
            family.push(TrialFunction {
                label: format!("shifted_eigen_{i}"),
                values: v.iter().map(|x| (1.0 + x / sup).max(0.0)).collect(),
            });
        }
    }

    let centre = opts.tip.unwrap_or_else(|| match domain.tip() {
        Some((x, y)) => [x, y],
        None => [0.0, 0.5 * (domain.top(0.0) - domain.depth)],
    });
    let dist = |p: &[f64; 2]| (p[0] - centre[0]).hypot(p[1] - centre[1]);
    let mut indicator: Vec<f64> = space.mesh.nodes.iter().map(|p| if dist(p) <= opts.tip_radius { 1.0 } else { 0.0 }).collect();
    if indicator.iter().all(|&v| v == 0.0) {
        let nearest = (0..n).min_by(|&a, &b| dist(&space.mesh.nodes[a]).total_cmp(&dist(&space.mesh.nodes[b]))).expect("mesh has nodes");
        indicator[nearest] = 1.0;
    }
    let mut bumps = Vec::new();
    for &t in &opts.smoothing_times {
        let tau = t / opts.steps.max(1) as f64;
        let system = space.forms.mass.add_scaled(&space.forms.stiffness, tau)?;
        let chol = EnvelopeCholesky::factor(&system)?;
        let mut u = indicator.clone();
        for _ in 0..opts.steps.max(1) {
            u = chol.solve(&space.forms.mass.apply(&u));
        }
        u.iter_mut().for_each(|x| *x = x.max(0.0));
        bumps.push(TrialFunction { label: format!("tip_heat_{t:e}"), values: u });
    }
    family.extend(bumps.iter().cloned());
    if opts.pair_maxima {
        let pool: Vec<&TrialFunction> = bumps.iter().chain(&abs_eigen).collect();
        for i in 0..pool.len() {
            for j in i + 1..pool.len() {
                family.push(TrialFunction {
                    label: format!("max({},{})", pool[i].label, pool[j].label),
                    values: pool[i].values.iter().zip(&pool[j].values).map(|(a, b)| a.max(*b)).collect(),
                });
            }
        }
    }
    Ok(family)
}

/// η_lb(ε) and β_lb(ε) over a trial family.
#[derive(Debug, Clone, PartialEq)]
pub struct DeficitCurve {
    /// Strictly decreasing.
    pub eps_grid: Vec<f64>,
    pub eta_lb: Vec<f64>,
    /// η variant with −b0∫|log d| f² added to every deficit.
    pub beta_lb: Vec<f64>,
    pub b0: f64,
    pub eta_argmax: Vec<String>,
    pub beta_argmax: Vec<String>,
    pub trial_family: Vec<String>,
    /// Slope of log η_lb against log(1/ε) over the points with η_lb > 0.
    pub eta_exponent: Option<f64>,
    /// (b1, b2) in β_lb ≈ b1 − b2 log ε.
    pub beta_fit: (f64, f64),
}

/// Discrete slope/curvature violations beyond rounding of a curve on a grid.
fn shape_violations(eps: &[f64], y: &[f64]) -> (usize, usize) {
    // sort by increasing ε
    let mut pts: Vec<(f64, f64)> = eps.iter().copied().zip(y.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let slack = 1e-12 * scale;
    let mono = pts.windows(2).filter(|w| w[1].1 > w[0].1 + slack).count();
    let convex = pts
        .windows(3)
        .filter(|w| {
            let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
            s2 < s1 - slack / (w[2].0 - w[0].0).min(w[1].0 - w[0].0).min(w[2].0 - w[1].0)
        })
        .count();
    (mono, convex)
}

impl DeficitCurve {
    /// (nonincreasing, convex) violations of η_lb.
    pub fn eta_violations(&self) -> (usize, usize) {
        shape_violations(&self.eps_grid, &self.eta_lb)
    }

    pub fn beta_violations(&self) -> (usize, usize) {
        shape_violations(&self.eps_grid, &self.beta_lb)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), BoundsError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["eps", "eta_lb", "eta_argmax", "beta_lb", "beta_argmax"])?;
        for i in 0..self.eps_grid.len() {
            w.write_record([
                format!("{:e}", self.eps_grid[i]),
                format!("{:.12e}", self.eta_lb[i]),
                self.eta_argmax[i].clone(),
                format!("{:.12e}", self.beta_lb[i]),
                self.beta_argmax[i].clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid(eps_grid: &[f64]) -> Result<(), BoundsError> {
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(BoundsError::InvalidParameter("ε grid must be nonempty and positive".into()));
    }
    if eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(BoundsError::InvalidParameter("ε grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// Maximizes the deficits over the family at every ε.
pub fn eta_lower_bound(
    space: &DiscreteSpace,
    family: &[TrialFunction],
    eps_grid: &[f64],
    b0: f64,
) -> Result<DeficitCurve, BoundsError> {
    check_grid(eps_grid)?;
    if family.is_empty() {
        return Err(BoundsError::InvalidParameter("empty trial family".into()));
    }
    let terms: Vec<(f64, f64, f64)> = family.iter().map(|f| space.terms(&f.values)).collect::<Result<_, _>>()?;
    let best = |eps: f64, with_log: bool| -> (f64, usize) {
        terms
            .iter()
            .enumerate()
            .map(|(i, (ent, q, w))| (ent - eps * q - if with_log { b0 * w } else { 0.0 }, i))
            .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
    };
    let (mut eta_lb, mut beta_lb, mut eta_argmax, mut beta_argmax) = (vec![], vec![], vec![], vec![]);
    for &e in eps_grid {
        let (v, i) = best(e, false);
        eta_lb.push(v);
        eta_argmax.push(family[i].label.clone());
        let (v, i) = best(e, true);
        beta_lb.push(v);
        beta_argmax.push(family[i].label.clone());
    }
    let pos: Vec<(f64, f64)> =
        eps_grid.iter().zip(&eta_lb).filter(|(_, v)| **v > 0.0).map(|(e, v)| ((1.0 / e).ln(), v.ln())).collect();
    let eta_exponent = (pos.len() >= 2).then(|| {
        let (x, y): (Vec<f64>, Vec<f64>) = pos.into_iter().unzip();
        linear_fit(&x, &y).1
    });
    let xs: Vec<f64> = eps_grid.iter().map(|e| -e.ln()).collect();
    let beta_fit = if eps_grid.len() >= 2 {
        let (b1, b2, _) = linear_fit(&xs, &beta_lb);
        (b1, b2)
    } else {
        (beta_lb[0], 0.0)
    };
    Ok(DeficitCurve {
        eps_grid: eps_grid.to_vec(),
        eta_lb,
        beta_lb,
        b0,
        eta_argmax,
        beta_argmax,
        trial_family: family.iter().map(|f| f.label.clone()).collect(),
        eta_exponent,
        beta_fit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaEpsReport {
    pub alpha: f64,
    pub b6: f64,
    pub checked: usize,
    pub violations: usize,
    /// Largest LHS/RHS over the family and grid.
    pub worst_ratio: f64,
    pub worst: Option<(String, f64)>,
    /// Smallest b6 for which the family and grid show no violation.
    pub tight_b6: f64,
}

/// Checks ∫f²|log d| ≤ εQ(f) + ((ε/b6)^(−1/(α−1)) + ε)‖f‖² over family × grid.
pub fn lemma_eps_check(
    space: &DiscreteSpace,
    alpha: f64,
    b6: f64,
    eps_grid: &[f64],
    family: &[TrialFunction],
) -> Result<LemmaEpsReport, BoundsError> {
    if !(alpha > 1.0) || !(b6 > 0.0) {
        return Err(BoundsError::InvalidParameter(format!("alpha = {alpha}, b6 = {b6}")));
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(BoundsError::InvalidParameter("ε grid must be nonempty and positive".into()));
    }
    let p = 1.0 / (alpha - 1.0);
    let mut r = LemmaEpsReport { alpha, b6, checked: 0, violations: 0, worst_ratio: 0.0, worst: None, tight_b6: 0.0 };
    for f in family {
        let (_, q, lhs) = space.terms(&f.values)?;
        for &e in eps_grid {
            let rhs = e * q + (e / b6).powf(-p) + e;
            r.checked += 1;
            if lhs > rhs * (1.0 + 1e-12) {
                r.violations += 1;
            }
            if lhs / rhs > r.worst_ratio {
                r.worst_ratio = lhs / rhs;
                r.worst = Some((f.label.clone(), e));
            }
            // (b6/ε)^p ≥ lhs − εQ − ε
            let gap = lhs - e * q - e;
            if gap > 0.0 {
                r.tight_b6 = r.tight_b6.max(e * gap.powf(1.0 / p));
            }
        }
    }
    Ok(r)
}
