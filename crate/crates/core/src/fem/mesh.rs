use std::collections::HashSet;
use std::io::Write;

use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use super::FemError;
use crate::geometry::{CuspDomain, ProfileForm};
use crate::linalg::ContentHasher;

/// Minimum interior angle every mesh must reach, in degrees.
pub const MIN_ANGLE_DEG: f64 = 15.0;
const REFINE_ANGLE_DEG: f64 = 25.0;

/// Geometric grading toward the tip: layer k covers distances
/// ρ ∈ [r0·ratioᵏ⁺¹, r0·ratioᵏ) from the tip and uses element size h0·ratioᵏ.
#[derive(Debug, Clone, PartialEq)]
pub struct Grading {
    pub h0: f64,
    pub ratio: f64,
    pub w_min: f64,
    pub r0: f64,
    pub layers: usize,
    pub tip: Option<(f64, f64)>,
}

impl Grading {
    /// Layer index of a point, `None` outside the graded zone or without a tip.
    pub fn layer_of(&self, p: [f64; 2]) -> Option<usize> {
        let tip = self.tip?;
        let rho = ((p[0] - tip.0).powi(2) + (p[1] - tip.1).powi(2)).sqrt();
        if rho >= self.r0 {
            return None;
        }
        if rho <= 0.0 {
            return Some(self.layers - 1);
        }
        let k = ((rho / self.r0).ln() / self.ratio.ln()).floor() as usize;
        Some(k.min(self.layers - 1))
    }

    pub fn size_at(&self, p: [f64; 2]) -> f64 {
        match self.layer_of(p) {
            Some(k) => self.h0 * self.ratio.powi(k as i32),
            None => self.h0,
        }
    }

    pub fn min_size(&self) -> f64 {
        if self.tip.is_some() {
            self.h0 * self.ratio.powi(self.layers as i32 - 1)
        } else {
            self.h0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub grading: Grading,
    /// Smallest interior angle over all triangles, in degrees.
    pub min_angle_deg: f64,
}

pub(crate) fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn min_angle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let ang = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        let (u, v) = ([q[0] - p[0], q[1] - p[1]], [r[0] - p[0], r[1] - p[1]]);
        let cos = (u[0] * v[0] + u[1] * v[1]) / ((u[0].hypot(u[1])) * (v[0].hypot(v[1])));
        cos.clamp(-1.0, 1.0).acos().to_degrees()
    };
    ang(a, b, c).min(ang(b, c, a)).min(ang(c, a, b))
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| signed_area(self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]))
            .sum()
    }

    /// Longest edge over all triangles.
    pub fn max_edge(&self) -> f64 {
        let mut h = 0.0f64;
        for t in &self.triangles {
            for k in 0..3 {
                let (p, q) = (self.nodes[t[k]], self.nodes[t[(k + 1) % 3]]);
                h = h.max((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        h
    }

    /// Nodes within ρ < 4·w_min of the tip.
    pub fn tip_layer_count(&self) -> usize {
        let Some(tip) = self.grading.tip else { return 0 };
        let r = 4.0 * self.grading.w_min;
        self.nodes.iter().filter(|p| (p[0] - tip.0).hypot(p[1] - tip.1) < r).count()
    }

    pub fn hash(&self) -> [u8; 32] {
        let mut h = ContentHasher::new();
        h.str("mesh").u64(self.nodes.len() as u64);
        for p in &self.nodes {
            h.f64(p[0]).f64(p[1]);
        }
        h.u64(self.triangles.len() as u64);
        for t in &self.triangles {
            h.u64(t[0] as u64).u64(t[1] as u64).u64(t[2] as u64);
        }
        h.finish()
    }

    /// Checks orientation, edge conformity and the angle bound.
    pub fn validate(&self) -> Result<(), FemError> {
        let mut edges: std::collections::HashMap<(usize, usize), usize> = std::collections::HashMap::new();
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= self.nodes.len()) {
                return Err(FemError::InvalidMesh(format!("triangle {i} references a missing node")));
            }
            if signed_area(self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]) <= 0.0 {
                return Err(FemError::InvalidMesh(format!("triangle {i} is not positively oriented")));
            }
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let c = edges.entry((a.min(b), a.max(b))).or_insert(0);
                *c += 1;
                if *c > 2 {
                    return Err(FemError::InvalidMesh(format!("edge ({a}, {b}) shared by more than two triangles")));
                }
            }
        }
        Ok(())
    }

    pub fn write_nodes_csv<W: Write>(&self, w: W) -> Result<(), FemError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["id", "x", "y"])?;
        for (i, p) in self.nodes.iter().enumerate() {
            out.write_record([i.to_string(), format!("{:.17e}", p[0]), format!("{:.17e}", p[1])])?;
        }
        out.flush().map_err(|e| FemError::Io(e.to_string()))
    }

    pub fn write_elements_csv<W: Write>(&self, w: W) -> Result<(), FemError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["id", "n0", "n1", "n2"])?;
        for (i, t) in self.triangles.iter().enumerate() {
            out.write_record([i.to_string(), t[0].to_string(), t[1].to_string(), t[2].to_string()])?;
        }
        out.flush().map_err(|e| FemError::Io(e.to_string()))
    }
}

/// Triangulates the truncated domain. Rectangles (constant profiles) get the
/// structured two-triangles-per-square pattern with spacing h0; other profiles
/// are meshed by constrained Delaunay refinement with element size graded
/// geometrically toward the tip.
pub fn build_graded_mesh(d: &CuspDomain, h0: f64, ratio: f64) -> Result<Mesh, FemError> {
    let height = d.top(0.0) + d.depth;
    let diameter = (4.0 * d.half_width * d.half_width + (d.profile.max_height() + d.depth).powi(2)).sqrt();
    if !(h0 > 0.0 && h0 < diameter) {
        return Err(FemError::InvalidParameter(format!("h0 = {h0} must lie in (0, {diameter})")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(FemError::InvalidParameter(format!("ratio = {ratio} must lie in (0, 1)")));
    }
    match d.profile.form {
        ProfileForm::Constant { .. } => structured(d, h0, ratio, height),
        _ => unstructured(d, h0, ratio),
    }
}

fn structured(d: &CuspDomain, h0: f64, ratio: f64, height: f64) -> Result<Mesh, FemError> {
    let nx = ((2.0 * d.half_width / h0).round() as usize).max(1);
    let ny = ((height / h0).round() as usize).max(1);
    let x0 = -d.half_width;
    let y0 = -d.depth;
    let (dx, dy) = (2.0 * d.half_width / nx as f64, height / ny as f64);
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([x0 + i as f64 * dx, y0 + j as f64 * dy]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, e) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, e]);
        }
    }
    let grading = Grading { h0, ratio, w_min: d.w_min, r0: 0.0, layers: 0, tip: None };
    let mut mesh = Mesh { nodes, triangles, grading, min_angle_deg: 0.0 };
    mesh.min_angle_deg = mesh_min_angle(&mesh).0;
    Ok(mesh)
}

fn mesh_min_angle(m: &Mesh) -> (f64, usize) {
    let mut worst = (180.0, 0);
    for (i, t) in m.triangles.iter().enumerate() {
        let a = min_angle(m.nodes[t[0]], m.nodes[t[1]], m.nodes[t[2]]);
        if a < worst.0 {
            worst = (a, i);
        }
    }
    worst
}

/// Points along a straight segment with local spacing from the grading.
fn subdivide_segment(g: &Grading, p: [f64; 2], q: [f64; 2], out: &mut Vec<[f64; 2]>) {
    let len = (q[0] - p[0]).hypot(q[1] - p[1]);
    let mut s = 0.0;
    out.push(p);
    loop {
        let cur = [p[0] + (q[0] - p[0]) * s / len, p[1] + (q[1] - p[1]) * s / len];
        let step = g.size_at(cur);
        if s + 1.5 * step >= len {
            // split the remainder into equal parts no larger than the local size
            let rem = len - s;
            let m = (rem / step).ceil().max(1.0) as usize;
            for k in 1..m {
                let t = (s + rem * k as f64 / m as f64) / len;
                out.push([p[0] + (q[0] - p[0]) * t, p[1] + (q[1] - p[1]) * t]);
            }
            break;
        }
        s += step;
        out.push([p[0] + (q[0] - p[0]) * s / len, p[1] + (q[1] - p[1]) * s / len]);
    }
}

/// Points along the top graph from x = a down to x = −a.
fn subdivide_top(d: &CuspDomain, g: &Grading, out: &mut Vec<[f64; 2]>) {
    let a = d.half_width;
    let mut xs: Vec<f64> = Vec::new();
    let n = 40_000;
    let x_lo = match d.slot_height() {
        Some(_) => 0.5 * d.w_min,
        None => a * 1e-9,
    };
    for i in 0..=n {
        let t = i as f64 / n as f64;
        xs.push(-a + 2.0 * a * t);
        let lx = x_lo * (a / x_lo).powf(t);
        xs.push(lx);
        xs.push(-lx);
    }
    let mut mandatory: Vec<f64> = vec![-a, a];
    if d.slot_height().is_some() {
        mandatory.extend([-0.5 * d.w_min, 0.5 * d.w_min]);
    }
    if let Some(xc) = d.cap_corner() {
        mandatory.extend([-xc, xc]);
    }
    for &x in &d.profile.special_points() {
        if x.abs() < a {
            mandatory.push(x);
        }
    }
    xs.extend(&mandatory);
    xs.retain(|x| x.abs() <= a);
    xs.sort_by(|p, q| q.total_cmp(p));
    xs.dedup();
    let is_mandatory = |x: f64| mandatory.iter().any(|&m| m == x);
    let pts: Vec<[f64; 2]> = xs.iter().map(|&x| [x, d.top(x)]).collect();
    let mut kept: Vec<usize> = vec![0];
    let mut i = 0;
    while i + 1 < pts.len() {
        let cur = pts[i];
        let h = g.size_at(cur);
        let mut j = i + 1;
        while j + 1 < pts.len() && !is_mandatory(xs[j]) {
            let nxt = pts[j + 1];
            if (nxt[0] - cur[0]).hypot(nxt[1] - cur[1]) > h.min(g.size_at(nxt)) {
                break;
            }
            j += 1;
        }
        kept.push(j);
        i = j;
    }
    // drop free points crowding their predecessor
    let mut filtered: Vec<usize> = Vec::with_capacity(kept.len());
    for (n, &k) in kept.iter().enumerate() {
        let last = n + 1 == kept.len();
        if let Some(&prev) = filtered.last() {
            let (p, q) = (pts[prev], pts[k]);
            let close = (p[0] - q[0]).hypot(p[1] - q[1]) < 0.4 * g.size_at(q).min(g.size_at(p));
            if close && !is_mandatory(xs[k]) && !last {
                continue;
            }
            if close && !is_mandatory(xs[prev]) && filtered.len() > 1 {
                filtered.pop();
            }
        }
        filtered.push(k);
    }
    out.extend(filtered.into_iter().map(|k| pts[k]));
}

fn unstructured(d: &CuspDomain, h0: f64, ratio: f64) -> Result<Mesh, FemError> {
    let tip = d.tip();
    let r0 = d.half_width;
    let layers = if tip.is_some() {
        let k = ((d.w_min / r0).ln() / ratio.ln()).ceil();
        if !(k >= 3.0) {
            return Err(FemError::InvalidParameter(format!(
                "ratio {ratio} gives {k} grading layers between r0 = {r0} and w_min = {}; at least 3 are needed",
                d.w_min
            )));
        }
        k as usize
    } else {
        1
    };
    let grading = Grading { h0, ratio, w_min: d.w_min, r0, layers, tip };

    // counter-clockwise boundary polygon
    let a = d.half_width;
    let y_bot = -d.depth;
    let mut poly: Vec<[f64; 2]> = Vec::new();
    subdivide_segment(&grading, [-a, y_bot], [a, y_bot], &mut poly);
    subdivide_segment(&grading, [a, y_bot], [a, d.top(a)], &mut poly);
    poly.pop();
    let mut top = Vec::new();
    subdivide_top(d, &grading, &mut top);
    poly.extend(top);
    poly.pop();
    subdivide_segment(&grading, [-a, d.top(-a)], [-a, y_bot], &mut poly);
    poly.pop();

    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    cdt.add_constraint_edges(poly.iter().map(|p| Point2::new(p[0], p[1])), true)
        .map_err(|e| FemError::Meshing(format!("boundary insertion failed: {e:?}")))?;

    for p in quadtree_points(d, &grading) {
        cdt.insert(Point2::new(p[0], p[1])).map_err(|e| FemError::Meshing(format!("{e:?}")))?;
    }
    let h_min = grading.min_size();
    let initial = cdt.num_vertices();
    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(REFINE_ANGLE_DEG))
        .with_min_required_area(0.1 * h_min * h_min)
        .with_max_allowed_area(0.5 * h0 * h0)
        .with_max_additional_vertices(20 * initial + 10_000)
        .exclude_outer_faces(true);
    let result = cdt.refine(params);
    if !result.refinement_complete {
        log::warn!("mesh refinement stopped at the vertex budget");
    }
    let excluded: HashSet<_> = result.excluded_faces.iter().copied().collect();

    let mut index = vec![usize::MAX; cdt.num_vertices()];
    let mut nodes: Vec<[f64; 2]> = Vec::new();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let vs = face.vertices();
        let mut tri = [0usize; 3];
        for (k, v) in vs.iter().enumerate() {
            let vi = v.fix().index();
            if index[vi] == usize::MAX {
                index[vi] = nodes.len();
                let p = v.position();
                nodes.push([p.x, p.y]);
            }
            tri[k] = index[vi];
        }
        triangles.push(tri);
    }
    // constraint splits land on chords of the graph; move them onto it
    for p in nodes.iter_mut() {
        p[0] = p[0].clamp(-a, a);
        p[1] = p[1].max(y_bot);
        let t = d.top(p[0]);
        if p[1] > t {
            p[1] = t;
        }
    }
    for t in triangles.iter_mut() {
        if signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
    let mut mesh = Mesh { nodes, triangles, grading, min_angle_deg: 0.0 };
    let (angle, worst) = mesh_min_angle(&mesh);
    mesh.min_angle_deg = angle;
    if angle < MIN_ANGLE_DEG {
        let t = mesh.triangles[worst];
        let c = [
            (mesh.nodes[t[0]][0] + mesh.nodes[t[1]][0] + mesh.nodes[t[2]][0]) / 3.0,
            (mesh.nodes[t[0]][1] + mesh.nodes[t[1]][1] + mesh.nodes[t[2]][1]) / 3.0,
        ];
        return Err(FemError::QualityUnattainable {
            layer: mesh.grading.layer_of(c),
            min_angle_deg: angle,
            at: (c[0], c[1]),
        });
    }
    mesh.validate()?;
    Ok(mesh)
}

/// Centres of a quadtree whose cells are refined until their side is below
/// the local element size, kept when comfortably inside the domain.
fn quadtree_points(d: &CuspDomain, g: &Grading) -> Vec<[f64; 2]> {
    let a = d.half_width;
    let y_lo = -d.depth;
    let y_hi = d.cap.unwrap_or(f64::INFINITY).min(d.profile.max_height()).max(d.top(a));
    let side = (2.0 * a).max(y_hi - y_lo);
    let mut out = Vec::new();
    let mut stack = vec![(-a, y_lo, side)];
    while let Some((x, y, s)) = stack.pop() {
        if x > a || y > y_hi {
            continue;
        }
        let c = [x + 0.5 * s, y + 0.5 * s];
        // size at the cell point nearest the tip
        let near = match g.tip {
            Some(t) => [t.0.clamp(x, x + s), t.1.clamp(y, y + s)],
            None => c,
        };
        if s > g.size_at(near) {
            let h = 0.5 * s;
            for (dx, dy) in [(0.0, 0.0), (h, 0.0), (0.0, h), (h, h)] {
                stack.push((x + dx, y + dy, h));
            }
            continue;
        }
        if d.contains((c[0], c[1])) && d.full_distance_unchecked((c[0], c[1])) > 0.6 * s {
            out.push(c);
        }
    }
    out.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CuspProfile;

    #[test]
    fn unit_square_structured_count() {
        let m = build_graded_mesh(&CuspDomain::unit_square(), 0.125, 0.5).unwrap();
        assert_eq!(m.n_triangles(), 128);
        assert_eq!(m.n_nodes(), 81);
        assert!((m.area() - 1.0).abs() < 1e-14);
        assert!((m.min_angle_deg - 45.0).abs() < 1e-9);
        m.validate().unwrap();
    }

    #[test]
    fn bad_parameters_rejected() {
        let sq = CuspDomain::unit_square();
        assert!(build_graded_mesh(&sq, 0.1, 1.5).is_err());
        assert!(build_graded_mesh(&sq, 10.0, 0.5).is_err());
        let d = CuspDomain::new(CuspProfile::canonical(1.0, 2.0).unwrap(), 0.3).unwrap().with_cap(0.5).unwrap();
        assert!(matches!(build_graded_mesh(&d, 0.1, 0.5), Err(FemError::InvalidParameter(_))));
    }

    #[test]
    fn csv_export() {
        let m = build_graded_mesh(&CuspDomain::unit_square(), 0.5, 0.5).unwrap();
        let mut n = Vec::new();
        let mut e = Vec::new();
        m.write_nodes_csv(&mut n).unwrap();
        m.write_elements_csv(&mut e).unwrap();
        assert_eq!(String::from_utf8(n).unwrap().lines().count(), 1 + 9);
        assert_eq!(String::from_utf8(e).unwrap().lines().count(), 1 + 8);
    }
}
