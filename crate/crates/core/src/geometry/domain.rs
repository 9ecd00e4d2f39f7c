use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::profile::{modulus_check, CuspProfile, ProfileForm, BASE_HALF_WIDTH};
use super::GeometryError;

/// Which part of the boundary a distance is measured to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceKind {
    /// The top graph Γ (including the flat slot left by truncation).
    Graph,
    /// The whole boundary of the truncated domain.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    sag: f64,
}

/// Truncated domain {|x′| < a, −depth < x_N < g_w(x′)}.
///
/// For the canonical profile g_w(x′) = g(max(|x′|, w_min/2)): the spike that
/// reaches down to the tip is blunted to a flat bottom of width w_min at
/// height g(w_min/2), so the two halves stay joined by a channel whose
/// narrowest horizontal section is w_min wide.
#[derive(Debug, Clone, PartialEq)]
pub struct CuspDomain {
    pub profile: CuspProfile,
    pub half_width: f64,
    pub depth: f64,
    pub w_min: f64,
    /// Optional flat ceiling: the top becomes min(g_w, cap).
    pub cap: Option<f64>,
    poly_x: Vec<f64>,
    poly_y: Vec<f64>,
    segs: Vec<Segment>,
}

const POLY_POINTS_PER_FAMILY: usize = 1200;

impl CuspDomain {
    pub fn new(profile: CuspProfile, w_min: f64) -> Result<Self, GeometryError> {
        Self::with_shape(profile, BASE_HALF_WIDTH, 0.0, w_min)
    }

    /// The unit square (−1/2, 1/2) × (0, 1) as the degenerate constant profile.
    pub fn unit_square() -> Self {
        Self::with_shape(CuspProfile::constant(1.0).expect("valid"), 0.5, 0.0, 1e-4).expect("valid square")
    }

    /// Rectangle (−a, a) × (0, height).
    pub fn rectangle(half_width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::with_shape(CuspProfile::constant(height)?, half_width, 0.0, 1e-4)
    }

    pub fn with_shape(profile: CuspProfile, half_width: f64, depth: f64, w_min: f64) -> Result<Self, GeometryError> {
        if !(half_width > 0.0 && half_width <= BASE_HALF_WIDTH) {
            return Err(GeometryError::InvalidParameter(format!("half width {half_width} not in (0, 1/2]")));
        }
        if !(depth >= 0.0 && depth.is_finite()) {
            return Err(GeometryError::InvalidParameter(format!("depth {depth}")));
        }
        if !(w_min > 0.0 && w_min.is_finite()) {
            return Err(GeometryError::InvalidParameter(format!("w_min {w_min} must be positive")));
        }
        let max_height = profile.max_height();
        if let ProfileForm::Canonical = profile.form {
            if w_min >= max_height {
                return Err(GeometryError::EmptyDomain { w_min, max_height });
            }
            if 0.5 * w_min >= half_width {
                return Err(GeometryError::EmptyDomain { w_min, max_height: half_width });
            }
        }
        if let ProfileForm::Sampled { ys, .. } = &profile.form {
            if ys.iter().any(|&y| y + depth <= 0.0) {
                return Err(GeometryError::InvalidParameter("sampled profile must stay above the bottom".into()));
            }
        }
        let mut d = Self { profile, half_width, depth, w_min, cap: None, poly_x: Vec::new(), poly_y: Vec::new(), segs: Vec::new() };
        d.build_polyline();
        Ok(d)
    }

    /// Caps the top boundary at `cap`, which must lie above the slot bottom.
    pub fn with_cap(mut self, cap: f64) -> Result<Self, GeometryError> {
        let floor = self.slot_height().unwrap_or(0.0);
        if !(cap > floor && cap.is_finite()) {
            return Err(GeometryError::InvalidParameter(format!("cap {cap} must exceed the slot height {floor}")));
        }
        self.cap = Some(cap);
        self.build_polyline();
        Ok(self)
    }

    /// x′ > 0 where the canonical graph meets the cap, if it does.
    pub fn cap_corner(&self) -> Option<f64> {
        let cap = self.cap?;
        let x = self.profile.inverse_width(cap)?;
        (x > 0.5 * self.w_min && x < self.half_width).then_some(x)
    }

    /// Height of the truncated slot bottom (canonical profile), else `None`.
    pub fn slot_height(&self) -> Option<f64> {
        match self.profile.form {
            ProfileForm::Canonical => Some(self.profile.eval_unchecked(0.5 * self.w_min)),
            _ => None,
        }
    }

    /// Location of the (truncated) tip, if the profile has one.
    pub fn tip(&self) -> Option<(f64, f64)> {
        self.slot_height().map(|y| (0.0, y))
    }

    /// Top boundary g_w(x′).
    pub fn top(&self, xp: f64) -> f64 {
        let g = match self.profile.form {
            ProfileForm::Canonical => self.profile.eval_unchecked(xp.abs().max(0.5 * self.w_min)),
            _ => self.profile.eval_unchecked(xp),
        };
        self.cap.map_or(g, |c| g.min(c))
    }

    pub fn contains(&self, x: (f64, f64)) -> bool {
        x.0.abs() < self.half_width && x.1 > -self.depth && x.1 < self.top(x.0)
    }

    /// Area by composite Gauss–Legendre on the top graph.
    pub fn area(&self) -> f64 {
        let (nodes, weights) = crate::linalg::gauss_legendre(8);
        let mut breaks = vec![-self.half_width, self.half_width];
        if self.slot_height().is_some() {
            breaks.extend([-0.5 * self.w_min, 0.5 * self.w_min]);
        }
        if let Some(xc) = self.cap_corner() {
            breaks.extend([-xc, xc]);
        }
        breaks.extend(self.profile.special_points().into_iter().filter(|x| x.abs() < self.half_width));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut area = 0.0;
        for w in breaks.windows(2) {
            // graded panels toward each end, where the canonical profile is singular
            let (a, b) = (w[0], w[1]);
            let panels = 200;
            for k in 0..panels {
                let t0 = k as f64 / panels as f64;
                let t1 = (k + 1) as f64 / panels as f64;
                let s = |t: f64| 0.5 - 0.5 * (std::f64::consts::PI * t).cos();
                let (p, q) = (a + (b - a) * s(t0), a + (b - a) * s(t1));
                for (xi, wi) in nodes.iter().zip(&weights) {
                    let x = 0.5 * (p + q) + 0.5 * (q - p) * xi;
                    area += 0.5 * (q - p) * wi * (self.top(x) + self.depth);
                }
            }
        }
        area
    }

    /// Sorted (x, y) vertices of the dense boundary polyline for the top graph.
    pub fn polyline(&self) -> Vec<(f64, f64)> {
        self.poly_x.iter().copied().zip(self.poly_y.iter().copied()).collect()
    }

    pub fn write_polyline_csv<W: Write>(&self, w: W) -> Result<(), GeometryError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "y"]).map_err(GeometryError::from_csv)?;
        for (x, y) in self.polyline() {
            out.write_record([format!("{x:.17e}"), format!("{y:.17e}")]).map_err(GeometryError::from_csv)?;
        }
        out.flush().map_err(|e| GeometryError::Io(e.to_string()))
    }

    fn build_polyline(&mut self) {
        let a = self.half_width;
        let mut right: Vec<f64> = Vec::new();
        match &self.profile.form {
            ProfileForm::Canonical => {
                let x0 = 0.5 * self.w_min;
                let n = POLY_POINTS_PER_FAMILY;
                let (y0, y1) = (self.top(x0), self.top(a));
                for i in 0..=n {
                    let t = i as f64 / n as f64;
                    right.push(x0 + (a - x0) * t);
                    right.push(x0 * (a / x0).powf(t));
                    let y = y0 + (y1 - y0) * t;
                    right.push(self.profile.inverse_width(y).unwrap_or(x0).clamp(x0, a));
                }
                if let Some(xc) = self.cap_corner() {
                    right.push(xc);
                }
                right.sort_by(f64::total_cmp);
                right.dedup_by(|p, q| (*p - *q).abs() <= 1e-15 * q.abs());
                let mut xs: Vec<f64> = right.iter().rev().map(|x| -x).collect();
                xs.extend(right.iter().copied());
                self.poly_y = xs.iter().map(|&x| self.top(x)).collect();
                self.poly_x = xs;
            }
            ProfileForm::Constant { height } => {
                let n = POLY_POINTS_PER_FAMILY;
                self.poly_x = (0..=n).map(|i| -a + 2.0 * a * i as f64 / n as f64).collect();
                self.poly_y = vec![self.cap.map_or(*height, |c| height.min(c)); n + 1];
            }
            ProfileForm::Sampled { xs, ys } => {
                let mut px = vec![-a];
                let mut py = vec![self.top(-a)];
                for (x, y) in xs.iter().zip(ys) {
                    if x.abs() < a {
                        px.push(*x);
                        py.push(self.cap.map_or(*y, |c| y.min(c)));
                    }
                }
                px.push(a);
                py.push(self.top(a));
                // densify long pieces so the window search stays local
                let mut dx = Vec::new();
                let mut dy = Vec::new();
                for i in 0..px.len() - 1 {
                    let m = 32;
                    for k in 0..m {
                        let t = k as f64 / m as f64;
                        dx.push(px[i] + (px[i + 1] - px[i]) * t);
                        dy.push(py[i] + (py[i + 1] - py[i]) * t);
                    }
                }
                dx.push(*px.last().unwrap());
                dy.push(*py.last().unwrap());
                self.poly_x = dx;
                self.poly_y = dy;
            }
        }
        let exact = !matches!(self.profile.form, ProfileForm::Sampled { .. });
        self.segs = (0..self.poly_x.len() - 1)
            .map(|i| {
                let (x0, x1, y0, y1) = (self.poly_x[i], self.poly_x[i + 1], self.poly_y[i], self.poly_y[i + 1]);
                let sag = if exact && x1 > x0 {
                    [0.25, 0.5, 0.75]
                        .iter()
                        .map(|t| (self.top(x0 + (x1 - x0) * t) - (y0 + (y1 - y0) * t)).abs())
                        .fold(0.0, f64::max)
                        * 1.5
                } else {
                    0.0
                };
                Segment { sag }
            })
            .collect();
    }

    fn check_inside(&self, x: (f64, f64)) -> Result<(), GeometryError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(GeometryError::OutsideDomain { x: x.0, y: x.1 })
        }
    }

    /// e(x) = g_w(x′) − x_N.
    pub fn vertical_gap(&self, x: (f64, f64)) -> Result<f64, GeometryError> {
        self.check_inside(x)?;
        Ok(self.top(x.0) - x.1)
    }

    /// Distance from an interior point to the top graph, capped by e(x).
    pub fn boundary_distance(&self, x: (f64, f64)) -> Result<f64, GeometryError> {
        self.check_inside(x)?;
        Ok(self.graph_distance_unchecked(x))
    }

    /// Distance to the whole boundary of the truncated domain.
    pub fn full_boundary_distance(&self, x: (f64, f64)) -> Result<f64, GeometryError> {
        self.check_inside(x)?;
        Ok(self.full_distance_unchecked(x))
    }

    pub fn distance(&self, kind: DistanceKind, x: (f64, f64)) -> Result<f64, GeometryError> {
        match kind {
            DistanceKind::Graph => self.boundary_distance(x),
            DistanceKind::Full => self.full_boundary_distance(x),
        }
    }

    pub(crate) fn full_distance_unchecked(&self, x: (f64, f64)) -> f64 {
        let sides = (self.half_width - x.0.abs()).min(x.1 + self.depth);
        let g = self.graph_distance_unchecked(x);
        g.min(sides)
    }

    pub(crate) fn graph_distance_unchecked(&self, p: (f64, f64)) -> f64 {
        let e = self.top(p.0) - p.1;
        let xs = &self.poly_x;
        let ys = &self.poly_y;
        let n = xs.len();
        let seg_dist = |i: usize| -> f64 {
            let (x0, y0, x1, y1) = (xs[i], ys[i], xs[i + 1], ys[i + 1]);
            let (dx, dy) = (x1 - x0, y1 - y0);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 { (((p.0 - x0) * dx + (p.1 - y0) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let (qx, qy) = (x0 + t * dx, y0 + t * dy);
            ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
        };
        // scan outward from p.0 while segments can still beat the bound
        let start = xs.partition_point(|&x| x < p.0).clamp(1, n - 1) - 1;
        let mut bound = e.max(0.0);
        let mut cands: Vec<(usize, f64)> = Vec::new();
        let mut i = start as isize;
        while i >= 0 {
            let iu = i as usize;
            if p.0 - xs[iu + 1] > bound {
                break;
            }
            let d = seg_dist(iu);
            bound = bound.min(d + self.segs[iu].sag);
            cands.push((iu, d));
            i -= 1;
        }
        for iu in start + 1..n - 1 {
            if xs[iu] - p.0 > bound {
                break;
            }
            let d = seg_dist(iu);
            bound = bound.min(d + self.segs[iu].sag);
            cands.push((iu, d));
        }
        let mut best = e.max(0.0);
        for (iu, d) in cands {
            if d - self.segs[iu].sag > bound {
                continue;
            }
            let r = if self.segs[iu].sag == 0.0 { d } else { self.refine_on_curve(p, xs[iu], xs[iu + 1]) };
            best = best.min(r);
        }
        best.min(e)
    }

    /// Golden-section minimization of the distance to the exact top graph over
    /// x′ ∈ [lo, hi].
    fn refine_on_curve(&self, p: (f64, f64), lo: f64, hi: f64) -> f64 {
        let dist2 = |x: f64| (x - p.0).powi(2) + (self.top(x) - p.1).powi(2);
        let mut best = dist2(lo).min(dist2(hi));
        let (mut a, mut b) = (lo, hi);
        let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut fc, mut fd) = (dist2(c), dist2(d));
        for _ in 0..80 {
            if b - a <= 1e-15 * (a.abs() + b.abs()).max(1e-300) {
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = dist2(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = dist2(d);
            }
        }
        best = best.min(fc).min(fd);
        best.sqrt()
    }
}

/// One point examined by the distance-bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceSample {
    pub point: (f64, f64),
    pub e_val: f64,
    pub d_gamma: f64,
    pub lower_verbatim: f64,
    pub lower_repaired: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaEdReport {
    pub a_eff: f64,
    pub samples: Vec<DistanceSample>,
    /// d_Γ > e or d_Γ ≤ 0
    pub upper_violations: usize,
    /// d_Γ below exp(−e^{−1/α}/(1+A))
    pub verbatim_violations: usize,
    /// d_Γ below exp(−((1+A_eff)/e)^{1/α})
    pub repaired_violations: usize,
    /// samples where the verbatim lower bound already exceeds e
    pub verbatim_inconsistent: usize,
}

/// exp(−e^{−1/α}/(1+A))
pub fn lower_bound_verbatim(a: f64, alpha: f64, e: f64) -> f64 {
    (-(e.powf(-1.0 / alpha)) / (1.0 + a)).exp()
}

/// exp(−((1+A)/e)^{1/α})
pub fn lower_bound_repaired(a: f64, alpha: f64, e: f64) -> f64 {
    (-((1.0 + a) / e).powf(1.0 / alpha)).exp()
}

/// Draws `samples` interior points with e(x) ≤ min(10⁻², (1+A)^(−α)) and
/// checks both lower bounds and the upper bound d_Γ ≤ e.
pub fn lemma_ed_check(d: &CuspDomain, samples: usize, seed: u64) -> Result<LemmaEdReport, GeometryError> {
    let a_eff = modulus_check(&d.profile, 10_000, seed)?.a_eff;
    let (a, alpha) = (d.profile.a, d.profile.alpha);
    let e_cap = 1e-2f64.min((1.0 + a).powf(-alpha));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LemmaEdReport {
        a_eff,
        samples: Vec::with_capacity(samples),
        upper_violations: 0,
        verbatim_violations: 0,
        repaired_violations: 0,
        verbatim_inconsistent: 0,
    };
    let hw = d.half_width;
    while report.samples.len() < samples {
        let mag: f64 = if rng.gen_bool(0.5) {
            (1e-8f64.ln() + rng.gen::<f64>() * (hw / 1e-8).ln()).exp()
        } else {
            rng.gen::<f64>() * hw
        };
        let xp = if rng.gen_bool(0.5) { mag } else { -mag };
        if xp.abs() >= hw {
            continue;
        }
        let top = d.top(xp);
        let e_hi = e_cap.min(top + d.depth);
        let e_lo = 1e-6f64.min(0.5 * e_hi);
        let e = (e_lo.ln() + rng.gen::<f64>() * (e_hi / e_lo).ln()).exp();
        let point = (xp, top - e);
        if !d.contains(point) {
            continue;
        }
        let e_val = d.top(xp) - point.1;
        let d_gamma = d.graph_distance_unchecked(point);
        let s = DistanceSample {
            point,
            e_val,
            d_gamma,
            lower_verbatim: lower_bound_verbatim(a, alpha, e_val),
            lower_repaired: lower_bound_repaired(a_eff, alpha, e_val),
        };
        if !(d_gamma > 0.0 && d_gamma <= e_val) {
            report.upper_violations += 1;
        }
        if d_gamma < s.lower_verbatim {
            report.verbatim_violations += 1;
        }
        if d_gamma < s.lower_repaired {
            report.repaired_violations += 1;
        }
        if s.lower_verbatim > e_val {
            report.verbatim_inconsistent += 1;
        }
        report.samples.push(s);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical(w_min: f64) -> CuspDomain {
        CuspDomain::new(CuspProfile::canonical(1.0, 2.0).unwrap(), w_min).unwrap()
    }

    #[test]
    fn gaps_and_square_distances() {
        let sq = CuspDomain::unit_square();
        assert!((sq.vertical_gap((0.1, 0.25)).unwrap() - 0.75).abs() < 1e-15);
        assert!((sq.full_boundary_distance((0.0, 0.5)).unwrap() - 0.5).abs() < 1e-15);
        assert!((sq.boundary_distance((0.0, 0.5)).unwrap() - 0.5).abs() < 1e-15);
        assert!(sq.vertical_gap((0.1, 1.0)).is_err());
        let c = canonical(1e-4);
        let x = ((-1.0f64).exp(), 0.5);
        assert!((c.vertical_gap(x).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_domain_rejected() {
        let p = CuspProfile::canonical(1.0, 2.0).unwrap();
        let top = p.max_height();
        assert!(matches!(CuspDomain::new(p, top * 1.01), Err(GeometryError::EmptyDomain { .. })));
    }

    #[test]
    fn polyline_is_dense_near_tip() {
        let c = canonical(1e-3);
        let pts = c.polyline();
        assert!(pts.len() >= 1000);
        let near = pts.iter().filter(|(x, _)| x.abs() < 1e-2).count();
        assert!(near >= 200, "{near}");
        let mut buf = Vec::new();
        c.write_polyline_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,y\n"));
    }

    #[test]
    fn distance_bounded_by_gap() {
        let c = canonical(1e-3);
        for i in 1..200 {
            let xp = -0.49 + 0.98 * i as f64 / 200.0;
            let y = 0.5 * c.top(xp);
            let d = c.boundary_distance((xp, y)).unwrap();
            assert!(d > 0.0 && d <= c.vertical_gap((xp, y)).unwrap());
        }
    }

    #[test]
    fn slot_geometry() {
        let c = canonical(1e-3);
        let ys = c.slot_height().unwrap();
        assert!((ys - 1.0 / (5e-4f64).ln().powi(2)).abs() < 1e-15);
        assert_eq!(c.top(0.0), ys);
        assert!(c.area() > 0.0 && c.area() < 0.5 * (2.0f64).ln().powi(-2) * 1.0 + 1e-12);
    }

    #[test]
    fn verbatim_bound_inconsistency_example() {
        let e = 0.04;
        assert!((lower_bound_verbatim(1.0, 2.0, e) - (-2.5f64).exp()).abs() < 1e-15);
        assert!(lower_bound_verbatim(1.0, 2.0, e) > e);
        assert!((lower_bound_repaired(1.0, 2.0, e) - (-(50f64).sqrt()).exp()).abs() < 1e-15);
    }
}
