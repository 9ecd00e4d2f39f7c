//! P1 finite elements for −f″ + n²f = λ g f on [u_min, U_max], on a grid uniform
//! in v = log u. In v the forms read
//!   ∫ f′² du = ∫ (df/dv)² e^(−v) dv,  ∫ f² w du = ∫ f² w(e^v) e^v dv.

use std::thread;

use super::{metric_eval, ManifoldError, U_MIN};
use crate::linalg::{
    gauss_legendre, rayleigh_min, solve_generalized, ContentHasher, EigenOptions, EigenPairSet, Interval, Quadrature,
    SparseSymmetricForm,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    pub alpha: f64,
    pub n_mode: u32,
    pub u_min: f64,
    /// Condition at u_min.
    pub bc: Boundary,
    /// Condition at the truncation point; Dirichlet unless a test needs the
    /// full Neumann kernel.
    pub far_bc: Boundary,
    pub u_max: f64,
    pub n_grid: usize,
}

/// 2000 nodes per decade of u between u_min and u_max.
pub fn default_grid_size(u_min: f64, u_max: f64) -> usize {
    (2000.0 * (u_max / u_min).log10()).ceil().max(10.0) as usize + 1
}

impl ManifoldModel {
    pub fn new(alpha: f64, n_mode: u32, bc: Boundary, u_max: f64) -> Result<Self, ManifoldError> {
        let m = Self {
            alpha,
            n_mode,
            u_min: U_MIN,
            bc,
            far_bc: Boundary::Dirichlet,
            u_max,
            n_grid: if u_max > U_MIN && u_max.is_finite() { default_grid_size(U_MIN, u_max) } else { 0 },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_grid(mut self, n_grid: usize) -> Result<Self, ManifoldError> {
        self.n_grid = n_grid;
        self.validate()?;
        Ok(self)
    }

    pub fn with_far_bc(mut self, far_bc: Boundary) -> Self {
        self.far_bc = far_bc;
        self
    }

    pub fn validate(&self) -> Result<(), ManifoldError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(ManifoldError::InvalidParameter(format!("alpha = {} must be ≥ 0", self.alpha)));
        }
        if !(self.u_min > 1.0 && self.u_max > self.u_min && self.u_max.is_finite()) {
            return Err(ManifoldError::InvalidParameter(format!(
                "need 1 < u_min < U_max, got {} and {}",
                self.u_min, self.u_max
            )));
        }
        if self.n_grid < 10 {
            return Err(ManifoldError::InvalidParameter(format!("N_grid = {} is below 10", self.n_grid)));
        }
        Ok(())
    }

    /// Nodes in v = log u, uniformly spaced.
    pub fn v_grid(&self) -> Vec<f64> {
        let (a, b) = (self.u_min.ln(), self.u_max.ln());
        let n = self.n_grid;
        (0..n).map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect()
    }

    pub fn grid_hash(&self) -> [u8; 32] {
        ContentHasher::new()
            .str("radial")
            .f64(self.alpha)
            .u64(self.n_mode as u64)
            .f64(self.u_min)
            .f64(self.u_max)
            .u64(self.n_grid as u64)
            .u64(matches!(self.bc, Boundary::Neumann) as u64)
            .u64(matches!(self.far_bc, Boundary::Neumann) as u64)
            .finish()
    }
}

/// Stiffness A (with the n² term) and metric-weighted mass B on the free nodes.
#[derive(Debug, Clone)]
pub struct RadialPencil {
    pub a: SparseSymmetricForm,
    pub b: SparseSymmetricForm,
    pub v: Vec<f64>,
    /// Grid indices of the unknowns.
    pub free: Vec<usize>,
}

impl RadialPencil {
    pub fn u_nodes(&self) -> Vec<f64> {
        self.v.iter().map(|v| v.exp()).collect()
    }

    /// Nodal values on the whole grid, zero at Dirichlet nodes.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.v.len()];
        for (&i, &xi) in self.free.iter().zip(x) {
            full[i] = xi;
        }
        full
    }

    /// Restriction of grid values to the unknowns.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    /// ∫ f² w du over the free-node space, w given as a function of u.
    pub fn weighted_mass(&self, w: impl Fn(f64) -> f64) -> Result<SparseSymmetricForm, ManifoldError> {
        let full = element_mass(&self.v, |v| w(v.exp()) * v.exp());
        Ok(full.restrict(&self.free)?)
    }
}

fn element_mass(v: &[f64], density: impl Fn(f64) -> f64) -> SparseSymmetricForm {
    let (xs, ws) = gauss_legendre(3);
    let mut trips = Vec::with_capacity(4 * v.len());
    for e in 0..v.len() - 1 {
        let (l, r) = (v[e], v[e + 1]);
        let h = r - l;
        let mut m = [[0.0; 2]; 2];
        for (x, wq) in xs.iter().zip(&ws) {
            let t = 0.5 * (x + 1.0);
            let phi = [1.0 - t, t];
            let d = density(l + t * h) * 0.5 * wq * h;
            for i in 0..2 {
                for j in 0..2 {
                    m[i][j] += d * phi[i] * phi[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                trips.push((e + i, e + j, m[i][j]));
            }
        }
    }
    SparseSymmetricForm::from_triplets(v.len(), &trips, false).expect("tridiagonal assembly")
}

pub fn radial_discretize(m: &ManifoldModel) -> Result<RadialPencil, ManifoldError> {
    m.validate()?;
    let v = m.v_grid();
    let n = v.len();
    let mut trips = Vec::with_capacity(4 * n);
    for e in 0..n - 1 {
        let h = v[e + 1] - v[e];
        // ∫ e^(−v) dv over the element, exactly
        let k = ((-v[e]).exp() - (-v[e + 1]).exp()) / (h * h);
        trips.extend([(e, e, k), (e + 1, e + 1, k), (e, e + 1, -k), (e + 1, e, -k)]);
    }
    let mut a = SparseSymmetricForm::from_triplets(n, &trips, false)?;
    if m.n_mode != 0 {
        let n2 = (m.n_mode as f64).powi(2);
        a = a.add_scaled(&element_mass(&v, |x| x.exp()), n2)?;
    }
    let alpha = m.alpha;
    let b = element_mass(&v, |x| (-x).exp() * x.powf(-alpha));
    let mut free: Vec<usize> = (0..n).collect();
    if m.far_bc == Boundary::Dirichlet {
        free.pop();
    }
    if m.bc == Boundary::Dirichlet {
        free.remove(0);
    }
    Ok(RadialPencil { a: a.restrict(&free)?, b: b.restrict(&free)?, v, free })
}

/// Lowest `k` radial eigenpairs, normalized so that ∫ f² g du = 1.
#[derive(Debug, Clone)]
pub struct RadialSpectrum {
    pub pencil: RadialPencil,
    pub pairs: EigenPairSet,
}

impl RadialSpectrum {
    /// Eigenfunction `i` on the whole grid.
    pub fn nodal(&self, i: usize) -> Vec<f64> {
        self.pencil.expand(&self.pairs.vectors[i])
    }
}

pub fn solve_radial(m: &ManifoldModel, k: usize, opts: &EigenOptions) -> Result<RadialSpectrum, ManifoldError> {
    let pencil = radial_discretize(m)?;
    let mut pairs = solve_generalized(&pencil.a, &pencil.b, k, opts)?;
    pairs.meta.grid_hash = m.grid_hash();
    Ok(RadialSpectrum { pencil, pairs })
}

/// inf ∫ f′² du / ∫ (log u)^α f² g du over the radial space. The weight
/// (log u)^α g(u) equals u⁻² for every α.
pub fn hardy_manifold_constant(m: &ManifoldModel, tol: f64) -> Result<f64, ManifoldError> {
    if m.bc != Boundary::Neumann || m.n_mode != 0 {
        return Err(ManifoldError::InvalidParameter(
            "the form bound is evaluated with Neumann conditions at u_min and n_mode = 0".into(),
        ));
    }
    let pencil = radial_discretize(m)?;
    let alpha = m.alpha;
    let w = pencil.weighted_mass(|u| u.ln().powf(alpha) * metric_eval(alpha, u).unwrap_or(0.0))?;
    Ok(rayleigh_min(&pencil.a, &w, &EigenOptions::with_tol(tol))?)
}

/// hardy_manifold_constant across truncations, solved concurrently and returned
/// in input order.
pub fn hardy_manifold_sweep(alpha: f64, u_maxes: &[f64], tol: f64) -> Result<Vec<(f64, f64)>, ManifoldError> {
    let models = u_maxes
        .iter()
        .map(|&u| ManifoldModel::new(alpha, 0, Boundary::Neumann, u))
        .collect::<Result<Vec<_>, _>>()?;
    thread::scope(|s| {
        let handles: Vec<_> = models.iter().map(|m| s.spawn(move || hardy_manifold_constant(m, tol))).collect();
        handles
            .into_iter()
            .zip(u_maxes)
            .map(|(h, &u)| Ok((u, h.join().expect("solver thread panicked")?)))
            .collect()
    })
}

/// Quotient ∫ φ′² du / ∫ φ² u⁻² du on [2π, U] for φ = u^{1/2} − 2(2π)^{1/4}u^{1/4}.
pub fn hardy_test_quotient(u_max: f64) -> Result<f64, ManifoldError> {
    if !(u_max > U_MIN) {
        return Err(ManifoldError::Domain(format!("U = {u_max} must exceed 2π")));
    }
    let c = 2.0 * U_MIN.powf(0.25);
    let q = Quadrature::relative(1e-11);
    let range = Interval::Finite(U_MIN.ln(), u_max.ln());
    // both integrals in v = log u
    let num = q.integrate(
        |v| {
            let u = v.exp();
            let d = 0.5 * u.powf(-0.5) - 0.25 * c * u.powf(-0.75);
            d * d * u
        },
        range,
    )?;
    let den = q.integrate(
        |v| {
            let u = v.exp();
            let p = u.sqrt() - c * u.powf(0.25);
            p * p / u
        },
        range,
    )?;
    Ok(num.value / den.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(alpha: f64, n_mode: u32, bc: Boundary) -> ManifoldModel {
        ManifoldModel::new(alpha, n_mode, bc, 1e3).unwrap().with_grid(400).unwrap()
    }

    #[test]
    fn neumann_kernel_is_constants() {
        let m = small(1.0, 0, Boundary::Neumann).with_far_bc(Boundary::Neumann);
        let p = radial_discretize(&m).unwrap();
        let ones = vec![1.0; p.free.len()];
        let r = p.a.apply(&ones);
        assert!(r.iter().all(|x| x.abs() < 1e-14), "{:e}", r.iter().fold(0.0f64, |a, x| a.max(x.abs())));
        let s = solve_radial(&m, 2, &EigenOptions::default()).unwrap();
        assert!(s.pairs.eigenvalues[0].abs() < 1e-8);
    }

    #[test]
    fn weight_integrates_the_metric() {
        let m = small(2.0, 0, Boundary::Neumann).with_far_bc(Boundary::Neumann);
        let p = radial_discretize(&m).unwrap();
        let ones = vec![1.0; p.free.len()];
        let total = p.b.quadratic_form(&ones);
        let exact = Quadrature::relative(1e-12)
            .integrate(|u| metric_eval(2.0, u).unwrap(), Interval::Finite(U_MIN, 1e3))
            .unwrap()
            .value;
        assert!((total - exact).abs() < 1e-6 * exact);
        let same = p.weighted_mass(|u| metric_eval(2.0, u).unwrap()).unwrap();
        assert!((same.quadratic_form(&ones) - total).abs() < 1e-14);
    }

    #[test]
    fn dirichlet_nodes_removed() {
        let m = small(1.0, 1, Boundary::Dirichlet);
        let p = radial_discretize(&m).unwrap();
        assert_eq!(p.free.len(), 398);
        assert_eq!(p.expand(&vec![1.0; 398])[0], 0.0);
    }

    #[test]
    fn small_grid_rejected() {
        let m = ManifoldModel::new(1.0, 0, Boundary::Neumann, 1e3).unwrap();
        assert!(m.with_grid(9).is_err());
        assert!(ManifoldModel::new(1.0, 0, Boundary::Neumann, 5.0).is_err());
    }

    #[test]
    fn zero_alpha_hardy_is_first_eigenvalue() {
        let m = small(0.0, 0, Boundary::Neumann);
        let h = hardy_manifold_constant(&m, 1e-10).unwrap();
        let s = solve_radial(&m, 1, &EigenOptions::with_tol(1e-10)).unwrap();
        assert!((h - s.pairs.eigenvalues[0]).abs() < 1e-8 * h.max(1e-12));
        assert!(h >= 0.0);
    }

    #[test]
    fn test_quotient_is_finite() {
        let q = hardy_test_quotient(1e5).unwrap();
        assert!(q.is_finite() && q > 0.0);
    }
}
