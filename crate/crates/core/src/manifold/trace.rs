use std::path::Path;
use std::thread;

use super::{solve_radial, Boundary, ManifoldError, ManifoldModel, RadialSpectrum};
use crate::linalg::{EigenOptions, EigenPairSet};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceOptions {
    /// Eigenpairs computed per truncation; the tracked branch must stay among them.
    pub k: usize,
    pub tol: f64,
    pub bc: Boundary,
    /// Grid size override; `None` uses the default density.
    pub n_grid: Option<usize>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { k: 5, tol: 1e-7, bc: Boundary::Neumann, n_grid: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub u_max: f64,
    pub n_grid: usize,
    /// Index of the tracked branch among the computed pairs.
    pub index: usize,
    pub lambda: f64,
    /// max |f| with ∫ f² g du = 1
    pub sup_norm: f64,
    /// Weighted overlap with the branch at the previous truncation (1 at the first).
    pub overlap: f64,
    /// The best overlap is small or not clearly ahead of the runner-up.
    pub crossing_flagged: bool,
    pub transformed_residual: f64,
    pub eigenvalues: Vec<f64>,
}

/// Least-squares fit of log sup|f| against log log U_max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFit {
    pub exponent: f64,
    pub intercept: f64,
    /// λ of the branch at the largest truncation.
    pub lambda: f64,
}

impl GrowthFit {
    pub fn relative_gap(&self) -> f64 {
        (self.exponent - self.lambda).abs() / self.lambda.abs()
    }
}

#[derive(Debug, Clone)]
pub struct RadialEigenSolution {
    pub alpha: f64,
    pub mode_index: usize,
    pub rows: Vec<TraceRow>,
    /// Pairs at the largest truncation.
    pub eigenpairs: EigenPairSet,
    pub lambda_of_interest: usize,
    pub fit: Option<GrowthFit>,
}

impl RadialEigenSolution {
    pub fn sup_norms(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sup_norm).collect()
    }

    pub fn strictly_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_norm > w[0].sup_norm)
    }

    /// |s_last − s_prev| / s_last
    pub fn last_relative_change(&self) -> f64 {
        let n = self.rows.len();
        if n < 2 {
            return f64::NAN;
        }
        let (a, b) = (self.rows[n - 2].sup_norm, self.rows[n - 1].sup_norm);
        (b - a).abs() / b
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ManifoldError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["u_max", "n_grid", "index", "lambda", "sup_norm", "overlap", "crossing_flagged", "transformed_residual"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:e}", r.u_max),
                r.n_grid.to_string(),
                r.index.to_string(),
                format!("{:.12e}", r.lambda),
                format!("{:.12e}", r.sup_norm),
                format!("{:.6}", r.overlap),
                r.crossing_flagged.to_string(),
                format!("{:.3e}", r.transformed_residual),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A match needs at least this overlap...
const MIN_OVERLAP: f64 = 0.5;
/// ...and a runner-up below this fraction of it.
const AMBIGUOUS: f64 = 0.7;

/// Residual of −k″ + (1/4 − λv^(−α))k = 0 for k(v) = e^(−v/2)f(e^v), by central
/// differences at interior nodes, relative to the larger of the two terms.
/// Nodes within `skip` of either end are ignored.
pub fn transformed_residual(v: &[f64], f: &[f64], lambda: f64, alpha: f64, skip: usize) -> f64 {
    let n = v.len();
    let k: Vec<f64> = v.iter().zip(f).map(|(v, f)| (-0.5 * v).exp() * f).collect();
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for i in skip.max(1)..n.saturating_sub(skip.max(1)) {
        let (hl, hr) = (v[i] - v[i - 1], v[i + 1] - v[i]);
        let kpp = 2.0 * ((k[i + 1] - k[i]) / hr - (k[i] - k[i - 1]) / hl) / (hl + hr);
        let pot = (0.25 - lambda * v[i].powf(-alpha)) * k[i];
        worst = worst.max((pot - kpp).abs());
        scale = scale.max(kpp.abs()).max(pot.abs());
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

/// |cos| of the weighted angle between `prev_f` (on grid `prev_v`, interpolated)
/// and pair `i` of `spec`, in the mass form of `spec`.
fn overlap(prev_v: &[f64], prev_f: &[f64], spec: &RadialSpectrum, i: usize) -> f64 {
    let p = &spec.pencil;
    let interp: Vec<f64> = p
        .v
        .iter()
        .map(|&x| {
            if x > *prev_v.last().expect("nonempty grid") {
                return 0.0;
            }
            let j = prev_v.partition_point(|&y| y <= x).clamp(1, prev_v.len() - 1);
            let t = (x - prev_v[j - 1]) / (prev_v[j] - prev_v[j - 1]);
            prev_f[j - 1] * (1.0 - t) + prev_f[j] * t
        })
        .collect();
    let a = p.restrict(&interp);
    let b = &spec.pairs.vectors[i];
    let ab = p.b.bilinear(&a, b);
    let aa = p.b.quadratic_form(&a);
    let bb = p.b.quadratic_form(b);
    (ab / (aa * bb).sqrt()).abs()
}

/// Sup-norm trace of one radial branch (n = 0) across truncations, followed by
/// maximal weighted overlap.
pub fn supnorm_trace(
    alpha: f64,
    mode_index: usize,
    truncations: &[f64],
    opts: &TraceOptions,
) -> Result<RadialEigenSolution, ManifoldError> {
    if !(alpha == 1.0 || (alpha > 1.0 && alpha <= 2.0)) {
        return Err(ManifoldError::InvalidParameter(format!("alpha = {alpha} outside {{1}} ∪ (1, 2]")));
    }
    if mode_index == 0 || mode_index >= opts.k {
        return Err(ManifoldError::InvalidParameter(format!(
            "mode index {mode_index} must be ≥ 1 and below k = {}",
            opts.k
        )));
    }
    if truncations.is_empty() || truncations.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ManifoldError::InvalidParameter("truncations must be nonempty and increasing".into()));
    }
    let models = truncations
        .iter()
        .map(|&u| {
            let m = ManifoldModel::new(alpha, 0, opts.bc, u)?;
            match opts.n_grid {
                Some(n) => m.with_grid(n),
                None => Ok(m),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let eig = EigenOptions::with_tol(opts.tol);
    let spectra: Vec<RadialSpectrum> = thread::scope(|s| {
        let handles: Vec<_> = models.iter().map(|m| s.spawn(|| solve_radial(m, opts.k, &eig))).collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect::<Result<_, _>>()
    })?;

    let mut rows = Vec::with_capacity(spectra.len());
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for (m, spec) in models.iter().zip(&spectra) {
        let (index, ov, ambiguous) = match &prev {
            None => (mode_index, 1.0, false),
            Some((pv, pf)) => {
                let mut ovs: Vec<(usize, f64)> = (0..spec.pairs.len()).map(|i| (i, overlap(pv, pf, spec, i))).collect();
                ovs.sort_by(|a, b| b.1.total_cmp(&a.1));
                let second = ovs.get(1).map_or(0.0, |o| o.1);
                (ovs[0].0, ovs[0].1, ovs[0].1 < MIN_OVERLAP || second > AMBIGUOUS * ovs[0].1)
            }
        };
        let f = spec.nodal(index);
        let lambda = spec.pairs.eigenvalues[index];
        rows.push(TraceRow {
            u_max: m.u_max,
            n_grid: m.n_grid,
            index,
            lambda,
            sup_norm: spec.pairs.sup_norms[index],
            overlap: ov,
            crossing_flagged: ambiguous,
            transformed_residual: transformed_residual(&spec.pencil.v, &f, lambda, alpha, m.n_grid / 20),
            eigenvalues: spec.pairs.eigenvalues.clone(),
        });
        if ambiguous {
            log::warn!("branch match at U_max = {:e} is ambiguous (best overlap {ov:.3})", m.u_max);
        }
        prev = Some((spec.pencil.v.clone(), f));
    }

    let fit = if alpha == 1.0 && rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| r.u_max.ln().ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.sup_norm.ln()).collect();
        let (slope, intercept) = least_squares(&xs, &ys);
        Some(GrowthFit { exponent: slope, intercept, lambda: rows.last().expect("nonempty").lambda })
    } else {
        None
    };
    let last = spectra.last().expect("nonempty");
    Ok(RadialEigenSolution {
        alpha,
        mode_index,
        lambda_of_interest: rows.last().expect("nonempty").index,
        rows,
        eigenpairs: last.pairs.clone(),
        fit,
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_vanishes_on_exact_solution() {
        // λ = 0: f = 1 gives k = e^(−v/2), and −k″ + k/4 = 0 exactly
        let v: Vec<f64> = (0..2001).map(|i| 2.0 + 8.0 * i as f64 / 2000.0).collect();
        let f = vec![1.0; v.len()];
        assert!(transformed_residual(&v, &f, 0.0, 1.0, 2) < 1e-6);
        let bad: Vec<f64> = v.iter().map(|x| x.sin()).collect();
        assert!(transformed_residual(&v, &bad, 0.0, 1.0, 2) > 0.1);
    }

    #[test]
    fn invalid_requests() {
        let o = TraceOptions::default();
        assert!(supnorm_trace(0.5, 1, &[1e3], &o).is_err());
        assert!(supnorm_trace(1.0, 0, &[1e3], &o).is_err());
        assert!(supnorm_trace(1.0, 1, &[1e4, 1e3], &o).is_err());
    }
}
