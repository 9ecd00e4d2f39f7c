use super::mesh::{signed_area, Mesh};
use super::FemError;
use crate::geometry::{CuspDomain, DistanceKind};
use crate::linalg::SparseSymmetricForm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Unit,
    /// |log d(x)|^s
    LogDistPower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub exponent: f64,
    pub distance: DistanceKind,
}

impl WeightSpec {
    pub fn unit() -> Self {
        Self { kind: WeightKind::Unit, exponent: 0.0, distance: DistanceKind::Graph }
    }

    pub fn log_dist(exponent: f64, distance: DistanceKind) -> Self {
        Self { kind: WeightKind::LogDistPower, exponent, distance }
    }

    /// Weight value for a boundary distance d > 0.
    pub fn value(&self, d: f64) -> f64 {
        match self.kind {
            WeightKind::Unit => 1.0,
            WeightKind::LogDistPower if self.exponent == 0.0 => 1.0,
            WeightKind::LogDistPower => d.ln().abs().powf(self.exponent),
        }
    }
}

/// Barycentric points and weights (summing to 1) of a triangle rule.
#[derive(Debug, Clone, Copy)]
pub struct TriangleRule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

/// Degree-2 rule with three interior points.
pub const RULE_DEGREE2: TriangleRule = TriangleRule {
    points: &[[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0]],
    weights: &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
};

const A1: f64 = 0.059_715_871_789_770;
const B1: f64 = 0.470_142_064_105_115;
const A2: f64 = 0.797_426_985_353_087;
const B2: f64 = 0.101_286_507_323_456;
const W1: f64 = 0.132_394_152_788_506;
const W2: f64 = 0.125_939_180_544_827;

/// Degree-5 seven-point rule.
pub const RULE_DEGREE5: TriangleRule = TriangleRule {
    points: &[
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [A1, B1, B1],
        [B1, A1, B1],
        [B1, B1, A1],
        [A2, B2, B2],
        [B2, A2, B2],
        [B2, B2, A2],
    ],
    weights: &[0.225, W1, W1, W1, W2, W2, W2],
};

/// Stiffness, mass and weighted mass on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Forms {
    pub stiffness: SparseSymmetricForm,
    pub mass: SparseSymmetricForm,
    pub weighted_mass: SparseSymmetricForm,
    /// Quadrature points whose boundary distance had to be clamped to 10⁻¹².
    pub nudged_points: usize,
}

/// Boundary distance at a quadrature point, clamped to 10⁻¹² when the point
/// sits on (or numerically beyond) the boundary.
pub(crate) fn distance_at(d: &CuspDomain, kind: DistanceKind, p: [f64; 2], nudged: &mut usize) -> f64 {
    let x = (p[0], p[1]);
    let dist = if d.contains(x) {
        match kind {
            DistanceKind::Graph => d.graph_distance_unchecked(x),
            DistanceKind::Full => d.full_distance_unchecked(x),
        }
    } else {
        0.0
    };
    if dist > 0.0 {
        dist
    } else {
        *nudged += 1;
        1e-12
    }
}

fn element_geometry(m: &Mesh, t: &[usize; 3]) -> ([[f64; 2]; 3], f64, [[f64; 2]; 3]) {
    let p = [m.nodes[t[0]], m.nodes[t[1]], m.nodes[t[2]]];
    let area = signed_area(p[0], p[1], p[2]);
    // gradients of the barycentric coordinates
    let mut grads = [[0.0; 2]; 3];
    for k in 0..3 {
        let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        grads[k] = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
    }
    (p, area, grads)
}

/// P1 stiffness and consistent mass.
pub fn assemble_basic(m: &Mesh) -> Result<(SparseSymmetricForm, SparseSymmetricForm), FemError> {
    let mut k = Vec::with_capacity(9 * m.triangles.len());
    let mut mm = Vec::with_capacity(9 * m.triangles.len());
    for t in &m.triangles {
        let (_, area, g) = element_geometry(m, t);
        for i in 0..3 {
            for j in 0..3 {
                let kij = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                let mij = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                k.push((t[i], t[j], kij));
                mm.push((t[i], t[j], mij));
            }
        }
    }
    let n = m.nodes.len();
    Ok((SparseSymmetricForm::from_triplets(n, &k, false)?, SparseSymmetricForm::from_triplets(n, &mm, false)?))
}

/// ∫ w(x) φᵢ φⱼ with the given rule.
pub fn weighted_mass_with<F: FnMut([f64; 2]) -> f64>(
    m: &Mesh,
    rule: TriangleRule,
    mut weight: F,
) -> Result<SparseSymmetricForm, FemError> {
    let mut trip = Vec::with_capacity(9 * m.triangles.len());
    for t in &m.triangles {
        let (p, area, _) = element_geometry(m, t);
        let mut local = [[0.0; 3]; 3];
        for (bary, wq) in rule.points.iter().zip(rule.weights) {
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            let w = weight(x) * wq * area;
            for i in 0..3 {
                for j in 0..3 {
                    local[i][j] += w * bary[i] * bary[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                trip.push((t[i], t[j], local[i][j]));
            }
        }
    }
    Ok(SparseSymmetricForm::from_triplets(m.nodes.len(), &trip, false)?)
}

/// Assembles the three forms; the weight is evaluated at the degree-2 rule's
/// interior points with distances from the domain.
pub fn assemble(m: &Mesh, d: &CuspDomain, w: &WeightSpec) -> Result<Forms, FemError> {
    let (stiffness, mass) = assemble_basic(m)?;
    let mut nudged = 0usize;
    let weighted_mass = if w.kind == WeightKind::Unit || w.exponent == 0.0 {
        mass.clone()
    } else {
        weighted_mass_with(m, RULE_DEGREE2, |x| w.value(distance_at(d, w.distance, x, &mut nudged)))?
    };
    if nudged > 0 {
        log::warn!("{nudged} quadrature points on the boundary were nudged inward by 1e-12");
    }
    Ok(Forms { stiffness, mass, weighted_mass, nudged_points: nudged })
}

/// ∫ F(x, f(x)) over the mesh for a nodal P1 function f, degree-5 rule.
pub fn integrate_nodal<F: FnMut([f64; 2], f64) -> f64>(m: &Mesh, f: &[f64], mut integrand: F) -> f64 {
    let mut total = 0.0;
    for t in &m.triangles {
        let (p, area, _) = element_geometry(m, t);
        let mut local = 0.0;
        for (bary, wq) in RULE_DEGREE5.points.iter().zip(RULE_DEGREE5.weights) {
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            let v = bary[0] * f[t[0]] + bary[1] * f[t[1]] + bary[2] * f[t[2]];
            local += wq * integrand(x, v);
        }
        total += area * local;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_graded_mesh, Grading};

    fn reference_triangle() -> Mesh {
        Mesh {
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2]],
            grading: Grading { h0: 1.0, ratio: 0.5, w_min: 1e-3, r0: 0.0, layers: 0, tip: None },
            min_angle_deg: 45.0,
        }
    }

    #[test]
    fn reference_element_mass_rows() {
        let m = reference_triangle();
        let (k, mass) = assemble_basic(&m).unwrap();
        for i in 0..3 {
            let row: f64 = mass.row(i).map(|(_, v)| v).sum();
            assert!((row - 0.5 / 3.0).abs() < 1e-14);
        }
        let kc = k.apply(&[1.0, 1.0, 1.0]);
        assert!(kc.iter().all(|v| v.abs() < 1e-15));
        // stiffness exact on affine data: Q(x) = area = 1/2
        assert!((k.quadratic_form(&[0.0, 1.0, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_exponent_weight_is_mass() {
        let d = CuspDomain::unit_square();
        let m = build_graded_mesh(&d, 0.25, 0.5).unwrap();
        let (_, mass) = assemble_basic(&m).unwrap();
        let w0 = weighted_mass_with(&m, RULE_DEGREE2, |_| 1.0).unwrap();
        for (a, b) in mass.values().iter().zip(w0.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let f = assemble(&m, &d, &WeightSpec::log_dist(0.0, DistanceKind::Full)).unwrap();
        assert_eq!(f.weighted_mass, f.mass);
    }

    #[test]
    fn degree5_rule_exact_on_quartics() {
        let m = reference_triangle();
        let got = integrate_nodal(&m, &[0.0; 3], |x, _| x[0].powi(2) * x[1].powi(2));
        // ∫ x²y² over the reference triangle = 2!2!/6! = 1/180
        assert!((got - 1.0 / 180.0).abs() < 1e-15);
    }
}
