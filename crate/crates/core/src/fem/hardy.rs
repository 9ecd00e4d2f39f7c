use super::{assemble, build_graded_mesh, FemError, WeightSpec};
use crate::geometry::{CuspDomain, DistanceKind};
use crate::linalg::{rayleigh_min, EigenOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct HardyParams {
    /// Refinement levels, coarse to fine.
    pub h0_levels: Vec<f64>,
    pub ratio: f64,
    /// Truncation sweep, large to small.
    pub w_mins: Vec<f64>,
    pub distance: DistanceKind,
    /// Test functions are set to zero at nodes farther than this from the tip.
    pub support_radius: Option<f64>,
    pub tol: f64,
}

impl Default for HardyParams {
    fn default() -> Self {
        Self {
            h0_levels: vec![0.1, 0.07, 0.05],
            ratio: 0.5,
            w_mins: vec![1e-2, 1e-3, 1e-4],
            distance: DistanceKind::Graph,
            support_radius: None,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardyLevel {
    pub w_min: f64,
    pub h0: f64,
    pub n_nodes: usize,
    pub b_inv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardyReport {
    pub s: f64,
    pub levels: Vec<HardyLevel>,
    /// Value at the finest mesh and smallest w_min.
    pub b_inv: f64,
    pub b6: f64,
    /// Relative change between the two finest meshes at the smallest w_min.
    pub refinement_change: f64,
    /// b_inv at the finest mesh decreases strictly as w_min shrinks.
    pub decays_with_w_min: bool,
}

/// b_inv = inf (Q(f) + ‖f‖²) / ∫|log d|^s f² over P1 functions, for every
/// (w_min, h0) pair of the sweep.
pub fn hardy_constant_2d(template: &CuspDomain, s: f64, params: &HardyParams) -> Result<HardyReport, FemError> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(FemError::InvalidParameter(format!("exponent s = {s} must be ≥ 0")));
    }
    if params.h0_levels.is_empty() || params.w_mins.is_empty() {
        return Err(FemError::InvalidParameter("empty refinement or truncation sweep".into()));
    }
    let weight = WeightSpec::log_dist(s, params.distance);
    let opts = EigenOptions::with_tol(params.tol);
    let mut levels = Vec::new();
    for &w_min in &params.w_mins {
        let mut d = CuspDomain::with_shape(template.profile.clone(), template.half_width, template.depth, w_min)?;
        if let Some(c) = template.cap {
            d = d.with_cap(c)?;
        }
        for &h0 in &params.h0_levels {
            let mesh = build_graded_mesh(&d, h0, params.ratio)?;
            let forms = assemble(&mesh, &d, &weight)?;
            let num = forms.stiffness.add_scaled(&forms.mass, 1.0)?;
            let (num, den) = match (params.support_radius, d.tip()) {
                (Some(r), Some(tip)) => {
                    let keep: Vec<usize> = (0..mesh.n_nodes())
                        .filter(|&i| (mesh.nodes[i][0] - tip.0).hypot(mesh.nodes[i][1] - tip.1) < r)
                        .collect();
                    (num.restrict(&keep)?, forms.weighted_mass.restrict(&keep)?)
                }
                _ => (num, forms.weighted_mass),
            };
            let b_inv = rayleigh_min(&num, &den, &opts)?;
            log::info!("hardy s={s} w_min={w_min:e} h0={h0} nodes={} b_inv={b_inv:.6}", mesh.n_nodes());
            levels.push(HardyLevel { w_min, h0, n_nodes: mesh.n_nodes(), b_inv });
        }
    }
    let nh = params.h0_levels.len();
    let last = levels.last().expect("nonempty").clone();
    let refinement_change = if nh >= 2 {
        let prev = &levels[levels.len() - 2];
        ((last.b_inv - prev.b_inv) / last.b_inv).abs()
    } else {
        f64::NAN
    };
    let finest: Vec<f64> = levels.chunks(nh).map(|c| c[nh - 1].b_inv).collect();
    let decays_with_w_min = finest.len() >= 2 && finest.windows(2).all(|w| w[1] < w[0]);
    Ok(HardyReport {
        s,
        b_inv: last.b_inv,
        b6: 1.0 / last.b_inv,
        levels,
        refinement_change,
        decays_with_w_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_zero_exponent() {
        let params = HardyParams { h0_levels: vec![0.25, 0.125], w_mins: vec![1e-3], ..HardyParams::default() };
        let r = hardy_constant_2d(&CuspDomain::unit_square(), 0.0, &params).unwrap();
        assert!((r.b_inv - 1.0).abs() < 1e-8, "{r:?}");
    }
}
