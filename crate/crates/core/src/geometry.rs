//! Domains, model cones, and the planar section profile b_θ(φ).
//!
//! A [`PolyhedralCone`] is `{x : x·n_i ≥ 0}` for inward unit normals `n_i`.
//! For a direction θ inside the cone, the plane `x·θ = 1` cuts the cone in a
//! convex polygon around θ; in polar coordinates (ρ, φ) centred at θ its
//! boundary is `ρ = b(φ)`, and on the arc belonging to face i
//! `b(φ) = d_i / cos(φ − φ_i)` with `d_i` the distance from θ to that edge.

use crate::error::{Error, Result};
use crate::optimize::{maximize_on_sphere, NelderMeadOptions};
use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// θ is strictly interior when θ·n ≥ this for every face.
pub const ADMISSIBLE_TOL: f64 = 1e-9;
/// Tolerance for the equal-distance (inscribed circle) test.
pub const INSCRIBED_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Planar polygons

/// Simple counterclockwise polygon with a constant boundary weight per edge.
/// Edge `i` runs from vertex `i` to vertex `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanarPolygon {
    vertices: Vec<[f64; 2]>,
    #[serde(rename = "weight")]
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPolygon {
    vertices: Vec<[f64; 2]>,
    #[serde(default)]
    weight: Option<Vec<f64>>,
}

impl<'de> Deserialize<'de> for PlanarPolygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawPolygon::deserialize(d)?;
        PlanarPolygon::new(raw.vertices, raw.weight).map_err(serde::de::Error::custom)
    }
}

impl PlanarPolygon {
    /// Validates and normalizes orientation to counterclockwise. `weights`
    /// defaults to G ≡ 1 and otherwise needs one entry per edge.
    pub fn new(vertices: Vec<[f64; 2]>, weights: Option<Vec<f64>>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidPolygon {
                vertex: n.saturating_sub(1),
                reason: "a polygon needs at least 3 vertices".into(),
            });
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        if weights.len() != n {
            return Err(Error::InvalidPolygon {
                vertex: 0,
                reason: format!("expected {n} edge weights, got {}", weights.len()),
            });
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::InvalidPolygon {
                    vertex: i,
                    reason: "non-finite coordinate".into(),
                });
            }
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidPolygon {
                vertex: i,
                reason: "non-finite edge weight".into(),
            });
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::NoPositiveWeight);
        }
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(Error::InvalidPolygon {
                    vertex: (i + 1) % n,
                    reason: "repeated consecutive vertex".into(),
                });
            }
        }
        check_simple(&vertices)?;
        let mut poly = Self { vertices, weights };
        if poly.signed_area() < 0.0 {
            poly.vertices.reverse();
            let old = poly.weights.clone();
            for k in 0..n {
                poly.weights[k] = old[(2 * n - 2 - k) % n];
            }
        }
        Ok(poly)
    }

    pub fn with_unit_weight(vertices: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(vertices, None)
    }

    pub fn rectangle(width: f64, height: f64) -> Result<Self> {
        Self::with_unit_weight(vec![[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]])
    }

    pub fn unit_square() -> Self {
        Self::rectangle(1.0, 1.0).expect("unit square is valid")
    }

    pub fn equilateral_triangle(side: f64) -> Result<Self> {
        Self::with_unit_weight(vec![[0.0, 0.0], [side, 0.0], [0.5 * side, 0.5 * 3f64.sqrt() * side]])
    }

    /// The unit square with its upper-right quarter removed.
    pub fn l_shape() -> Self {
        Self::with_unit_weight(vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 0.5],
            [0.5, 0.5],
            [0.5, 1.0],
            [0.0, 1.0],
        ])
        .expect("L-shape is valid")
    }

    /// Regular n-gon inscribed in the circle of the given radius about the origin.
    pub fn regular(n: usize, radius: f64) -> Result<Self> {
        let verts = (0..n)
            .map(|k| {
                let t = TAU * k as f64 / n as f64;
                [radius * t.cos(), radius * t.sin()]
            })
            .collect();
        Self::with_unit_weight(verts)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge(&self, i: usize) -> ([f64; 2], [f64; 2]) {
        (self.vertices[i], self.vertices[(i + 1) % self.len()])
    }

    pub fn signed_area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let (a, b) = self.edge(i);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .sum()
    }

    /// Inner half-angle at each vertex, in (0, π).
    pub fn half_angles(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let v = self.vertices[i];
                let next = self.vertices[(i + 1) % n];
                let prev = self.vertices[(i + n - 1) % n];
                let a = [next[0] - v[0], next[1] - v[1]];
                let b = [prev[0] - v[0], prev[1] - v[1]];
                let mut ang = (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
                if ang <= 0.0 {
                    ang += TAU;
                }
                0.5 * ang
            })
            .collect()
    }

    /// Boundary singularities: one planar-angle descriptor per vertex (a
    /// straight vertex becomes a smooth point) and one smooth point per
    /// edge carrying that edge's weight. A vertex takes the smaller of the
    /// two adjacent edge weights.
    pub fn corners(&self) -> Vec<CornerDescriptor> {
        let n = self.len();
        let mut out = Vec::with_capacity(2 * n);
        for (i, alpha) in self.half_angles().into_iter().enumerate() {
            let weight = self.weights[i].min(self.weights[(i + n - 1) % n]);
            let kind = if (alpha - 0.5 * PI).abs() < 1e-12 {
                CornerKind::SmoothPoint
            } else {
                CornerKind::PlanarAngle { alpha }
            };
            out.push(CornerDescriptor {
                kind,
                weight,
                label: Some(format!("vertex {i}")),
            });
        }
        for (i, &w) in self.weights.iter().enumerate() {
            out.push(CornerDescriptor {
                kind: CornerKind::SmoothPoint,
                weight: w,
                label: Some(format!("edge {i}")),
            });
        }
        out
    }

    /// Euclidean distance from `p` to the boundary.
    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        (0..self.len())
            .map(|i| {
                let (a, b) = self.edge(i);
                point_segment_distance(p, a, b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Even–odd point-in-polygon test. Points on the boundary are unspecified.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let n = self.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[j]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }
}

fn shoelace(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
}

pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    robust::orient2d(
        robust::Coord { x: a[0], y: a[1] },
        robust::Coord { x: b[0], y: b[1] },
        robust::Coord { x: c[0], y: c[1] },
    )
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    (o1 == 0.0 && on_segment(c, a, b))
        || (o2 == 0.0 && on_segment(d, a, b))
        || (o3 == 0.0 && on_segment(a, c, d))
        || (o4 == 0.0 && on_segment(b, c, d))
}

fn check_simple(v: &[[f64; 2]]) -> Result<()> {
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        // adjacent edge folding back onto this one
        let c = v[(i + 2) % n];
        if orient(a, b, c) == 0.0 {
            let back = (c[0] - b[0]) * (a[0] - b[0]) + (c[1] - b[1]) * (a[1] - b[1]) > 0.0;
            if back {
                return Err(Error::InvalidPolygon {
                    vertex: (i + 1) % n,
                    reason: "zero interior angle (edges overlap)".into(),
                });
            }
        }
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (v[j], v[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return Err(Error::InvalidPolygon {
                    vertex: i,
                    reason: format!("edge {i} intersects edge {j}; polygon is not simple"),
                });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Boundary singularities

/// Local model of the boundary at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CornerKind {
    SmoothPoint,
    /// Planar angle of half-opening `alpha`.
    PlanarAngle {
        alpha: f64,
    },
    /// `R^{m-2} × U_alpha`.
    Wedge {
        alpha: f64,
        ambient_dim: usize,
    },
    PolyhedralCone {
        cone: PolyhedralCone,
    },
    HalfSpaceContaining,
    /// Outward-pointing power cusp `|y| < x^p`; it has no finite corner constant.
    Cusp {
        p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerDescriptor {
    #[serde(flatten)]
    pub kind: CornerKind,
    /// Boundary weight G at the point.
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn one() -> f64 {
    1.0
}

impl CornerDescriptor {
    pub fn new(kind: CornerKind, weight: f64) -> Self {
        Self {
            kind,
            weight,
            label: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.weight.is_finite() {
            return Err(Error::domain("corner weight must be finite"));
        }
        match &self.kind {
            CornerKind::PlanarAngle { alpha } | CornerKind::Wedge { alpha, .. } => {
                if !(*alpha > 0.0 && *alpha < PI) {
                    return Err(Error::domain(format!(
                        "half-angle {alpha} outside (0, pi); a zero angle is an outward cusp"
                    )));
                }
            }
            CornerKind::Cusp { p } => {
                return Err(Error::domain(format!(
                    "outward-pointing cusp (p = {p}) has no finite corner constant: |Lambda| grows faster than gamma^2"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Polyhedral cones

/// Convex cone `{x ∈ R^j : x·n_i ≥ 0}` with inward unit face normals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyhedralCone {
    dim: usize,
    #[serde(serialize_with = "ser_normals")]
    normals: Vec<DVector<f64>>,
}

fn ser_normals<S: serde::Serializer>(n: &[DVector<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(n.len()))?;
    for v in n {
        seq.serialize_element(v.as_slice())?;
    }
    seq.end()
}

#[derive(Deserialize)]
struct RawCone {
    dim: usize,
    normals: Vec<Vec<f64>>,
}

impl<'de> Deserialize<'de> for PolyhedralCone {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawCone::deserialize(d)?;
        if raw.normals.iter().any(|n| n.len() != raw.dim) {
            return Err(serde::de::Error::custom("normal length differs from dim"));
        }
        PolyhedralCone::new(raw.normals).map_err(serde::de::Error::custom)
    }
}

/// What a cone looks like after splitting off its lineality space.
#[derive(Debug, Clone, PartialEq)]
pub enum ConeClass {
    HalfSpace,
    /// Codimension-2 edge with half-angle `alpha`.
    Wedge {
        alpha: f64,
    },
    /// Pointed cone of the given codimension (≥ 3), expressed in the span of the normals.
    Vertex {
        codim: usize,
        reduced: PolyhedralCone,
    },
}

impl PolyhedralCone {
    /// Normalizes the given normals and checks that the cone has interior.
    pub fn new(normals: Vec<Vec<f64>>) -> Result<Self> {
        let dim = normals
            .first()
            .map(|n| n.len())
            .ok_or_else(|| Error::InvalidCone("no faces".into()))?;
        if dim < 2 {
            return Err(Error::InvalidCone(format!("dimension {dim} < 2")));
        }
        let mut out = Vec::with_capacity(normals.len());
        for (i, n) in normals.into_iter().enumerate() {
            if n.len() != dim {
                return Err(Error::InvalidCone(format!("normal {i} has length {}", n.len())));
            }
            let v = DVector::from_vec(n);
            let norm = v.norm();
            if !(norm > 1e-12) || !norm.is_finite() {
                return Err(Error::InvalidCone(format!("normal {i} is zero or non-finite")));
            }
            out.push(v / norm);
        }
        let cone = Self { dim, normals: out };
        let (_, t) = cone.chebyshev_direction()?;
        if t <= ADMISSIBLE_TOL {
            return Err(Error::InvalidCone("cone has empty interior".into()));
        }
        Ok(cone)
    }

    /// The nonnegative orthant of R^j.
    pub fn orthant(dim: usize) -> Self {
        let normals = (0..dim)
            .map(|k| {
                let mut v = vec![0.0; dim];
                v[k] = 1.0;
                v
            })
            .collect();
        Self::new(normals).expect("orthant is a valid cone")
    }

    /// Circumscribed polyhedral approximation of the circular cone of
    /// half-angle `alpha` about the z-axis in R³.
    pub fn circular(alpha: f64, faces: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5 * PI) || faces < 3 {
            return Err(Error::InvalidCone(
                "need alpha in (0, pi/2) and at least 3 faces".into(),
            ));
        }
        let normals = (0..faces)
            .map(|k| {
                let psi = TAU * k as f64 / faces as f64;
                vec![-alpha.cos() * psi.cos(), -alpha.cos() * psi.sin(), alpha.sin()]
            })
            .collect();
        Self::new(normals)
    }

    /// Cone over a convex spherical polygon given by its vertices (unit
    /// vectors in R³, counterclockwise seen from outside the sphere).
    pub fn over_spherical_polygon(vertices: &[[f64; 3]]) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidCone("need at least 3 spherical vertices".into()));
        }
        let normals = (0..n)
            .map(|i| {
                let a = Vector3::from(vertices[i]);
                let b = Vector3::from(vertices[(i + 1) % n]);
                let c = a.cross(&b);
                vec![c.x, c.y, c.z]
            })
            .collect();
        Self::new(normals)
    }

    /// `R × U_alpha` in R³: a dihedral edge of half-angle `alpha` along the
    /// z-axis. Only convex wedges (α ≤ π/2) are cones of this kind; reentrant
    /// edges are described by [`CornerKind::Wedge`] directly.
    pub fn wedge(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 0.5 * PI) {
            return Err(Error::InvalidCone(format!(
                "wedge half-angle {alpha} must lie in (0, pi/2]"
            )));
        }
        Self::new(vec![
            vec![alpha.sin(), -alpha.cos(), 0.0],
            vec![alpha.sin(), alpha.cos(), 0.0],
        ])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normals(&self) -> &[DVector<f64>] {
        &self.normals
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.normals.iter().all(|n| n.dot(x) >= 0.0)
    }

    /// Applies an orthogonal map to every normal.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Self {
        Self {
            dim: self.dim,
            normals: self.normals.iter().map(|n| q * n).collect(),
        }
    }

    /// Rank of the span of the normals; the cone is pointed iff it equals `dim`.
    pub fn rank(&self) -> usize {
        let m = DMatrix::from_columns(&self.normals);
        m.rank(1e-10)
    }

    pub fn is_pointed(&self) -> bool {
        self.rank() == self.dim
    }

    /// A convex cone contains a half-space only when it is one.
    pub fn contains_half_space(&self) -> bool {
        let n0 = &self.normals[0];
        self.normals.iter().all(|n| (n - n0).norm() < 1e-12)
    }

    /// Splits off the lineality space and reports what remains.
    pub fn classify(&self) -> Result<ConeClass> {
        if self.contains_half_space() {
            return Ok(ConeClass::HalfSpace);
        }
        let r = self.rank();
        let basis = span_basis(&self.normals, r);
        let reduced: Vec<Vec<f64>> = self
            .normals
            .iter()
            .map(|n| basis.iter().map(|b| b.dot(n)).collect())
            .collect();
        if r == 2 {
            // planar cone: the feasible arc is bounded by the two most separated normals
            let mut widest = 0.0f64;
            for i in 0..reduced.len() {
                for j in i + 1..reduced.len() {
                    let c = reduced[i][0] * reduced[j][0] + reduced[i][1] * reduced[j][1];
                    widest = widest.max(c.clamp(-1.0, 1.0).acos());
                }
            }
            let alpha = 0.5 * (PI - widest);
            if alpha <= 0.0 {
                return Err(Error::InvalidCone("planar section has empty interior".into()));
            }
            return Ok(ConeClass::Wedge { alpha });
        }
        let reduced = if r == self.dim {
            self.clone()
        } else {
            PolyhedralCone::new(reduced)?
        };
        Ok(ConeClass::Vertex { codim: r, reduced })
    }

    /// Deterministic start directions: the normalized normal sum, the first
    /// normal, and ± each coordinate axis.
    pub fn start_directions(&self) -> Vec<DVector<f64>> {
        let mut starts = Vec::new();
        let sum: DVector<f64> = self.normals.iter().fold(DVector::zeros(self.dim), |acc, n| acc + n);
        if sum.norm() > 1e-12 {
            starts.push(sum.normalize());
        }
        starts.push(self.normals[0].clone());
        for k in 0..self.dim {
            for s in [1.0, -1.0] {
                let mut e = DVector::zeros(self.dim);
                e[k] = s;
                starts.push(e);
            }
        }
        starts
    }

    fn min_dot(&self, theta: &DVector<f64>) -> f64 {
        self.normals.iter().map(|n| n.dot(theta)).fold(f64::INFINITY, f64::min)
    }

    /// Direction maximizing `min_i θ·n_i` on the unit sphere (the centre of
    /// the largest spherical cap inside the cross-section), with that value.
    pub fn chebyshev_direction(&self) -> Result<(DVector<f64>, f64)> {
        let starts = self.start_directions();
        let opts = NelderMeadOptions {
            initial_step: 0.3,
            x_tol: 1e-13,
            max_evals: 6000,
            ..Default::default()
        };
        let (mut theta, mut t) = maximize_on_sphere(|x| self.min_dot(x), &starts, &opts)
            .ok_or_else(|| Error::OptimizationFailed("no finite start direction".into()))?;
        // polish on the near-active set: the optimum is the minimum-norm point of
        // {x : N_S x = 1} for some subset S, rescaled to the sphere
        let active: Vec<usize> = (0..self.normals.len())
            .filter(|&i| self.normals[i].dot(&theta) <= t + 1e-5 * t.abs().max(1e-3))
            .collect();
        if active.len() <= 12 {
            for size in 1..=active.len().min(self.dim) {
                for subset in combinations(&active, size) {
                    if let Some(cand) = equal_dot_direction(&self.normals, &subset) {
                        let v = self.min_dot(&cand);
                        if v > t {
                            t = v;
                            theta = cand;
                        }
                    }
                }
            }
        }
        Ok((theta, t))
    }
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut cur, &mut out);
    out
}

/// Unit θ in the span of the selected normals with equal θ·n over the subset.
fn equal_dot_direction(normals: &[DVector<f64>], subset: &[usize]) -> Option<DVector<f64>> {
    let k = subset.len();
    let gram = DMatrix::from_fn(k, k, |a, b| normals[subset[a]].dot(&normals[subset[b]]));
    let c = gram.lu().solve(&DVector::from_element(k, 1.0))?;
    if c.iter().any(|&x| x < -1e-12) {
        return None;
    }
    let mut x = DVector::zeros(normals[0].len());
    for (a, &i) in subset.iter().enumerate() {
        x.axpy(c[a], &normals[i], 1.0);
    }
    let norm = x.norm();
    (norm > 1e-14).then(|| x / norm)
}

fn span_basis(vectors: &[DVector<f64>], rank: usize) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let d = w.dot(b);
                w.axpy(-d, b, 1.0);
            }
        }
        let n = w.norm();
        if n > 1e-8 {
            basis.push(w / n);
        }
        if basis.len() == rank {
            break;
        }
    }
    basis
}

// ---------------------------------------------------------------------------
// Section profile (3-dimensional cones)

/// One straight edge of the section polygon, seen from θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileArc {
    /// Arc of polar angles `[start, end)`, within `[0, 2π]`.
    pub start: f64,
    pub end: f64,
    pub face: usize,
    /// Perpendicular distance from θ to the edge line.
    pub distance: f64,
    /// Polar angle of the foot of that perpendicular.
    pub foot: f64,
}

impl ProfileArc {
    pub fn b(&self, phi: f64) -> f64 {
        self.distance / (phi - self.foot).cos()
    }

    pub fn db(&self, phi: f64) -> f64 {
        let c = (phi - self.foot).cos();
        self.distance * (phi - self.foot).sin() / (c * c)
    }

    /// Closed-form antiderivative of b² on the arc: `d² tan(φ − φ_i)`.
    pub fn integral_b2(&self) -> f64 {
        let d2 = self.distance * self.distance;
        d2 * ((self.end - self.foot).tan() - (self.start - self.foot).tan())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionProfile {
    pub theta: [f64; 3],
    /// Orthonormal basis (e₁, e₂) of the plane orthogonal to θ; φ is measured from e₁ towards e₂.
    pub frame: [[f64; 3]; 2],
    /// Arcs sorted by start angle, partitioning [0, 2π).
    pub arcs: Vec<ProfileArc>,
}

impl SectionProfile {
    fn arc_index(&self, phi: f64) -> usize {
        let p = phi.rem_euclid(TAU);
        match self.arcs.binary_search_by(|a| a.start.total_cmp(&p)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    pub fn arc_at(&self, phi: f64) -> &ProfileArc {
        &self.arcs[self.arc_index(phi)]
    }

    pub fn b(&self, phi: f64) -> f64 {
        let p = phi.rem_euclid(TAU);
        self.arc_at(p).b(p)
    }

    /// b′(φ); at an arc joint the value from the arc starting there is used.
    pub fn db(&self, phi: f64) -> f64 {
        let p = phi.rem_euclid(TAU);
        self.arc_at(p).db(p)
    }

    pub fn min_distance(&self) -> f64 {
        self.arcs.iter().map(|a| a.distance).fold(f64::INFINITY, f64::min)
    }

    /// Distances of the distinct faces that carry an arc.
    pub fn face_distances(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for a in &self.arcs {
            if !out.iter().any(|(f, _)| *f == a.face) {
                out.push((a.face, a.distance));
            }
        }
        out
    }

    /// Arc joints, i.e. the polar angles of the section polygon's vertices.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.arcs.iter().map(|a| a.start).collect()
    }
}

fn frame_for(theta: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let t = DVector::from_column_slice(theta.as_slice());
    let basis = crate::optimize::orthonormal_complement(&t);
    let e1 = Vector3::from_column_slice(basis[0].as_slice());
    // right-handed so that (e1, e2, θ) is positively oriented
    let e2 = theta.cross(&e1);
    (e1, e2)
}

/// Builds `b_θ` for a cone in R³.
pub fn section_profile(cone: &PolyhedralCone, theta: &[f64]) -> Result<SectionProfile> {
    if cone.dim() != 3 || theta.len() != 3 {
        return Err(Error::domain("section_profile needs a cone and direction in R^3"));
    }
    let th = Vector3::from_column_slice(theta);
    let norm = th.norm();
    if !(norm > 0.0) {
        return Err(Error::domain("theta must be non-zero"));
    }
    let th = th / norm;
    for (i, n) in cone.normals().iter().enumerate() {
        let dot = th.dot(&Vector3::from_column_slice(n.as_slice()));
        if dot < ADMISSIBLE_TOL {
            return Err(Error::NotInterior { face: i, dot });
        }
    }
    let (e1, e2) = frame_for(&th);

    // face i is the half-plane η·f_i ≤ d_i, f_i the unit foot direction
    struct Line {
        face: usize,
        d: f64,
        foot: f64,
        q: Vector2<f64>,
    }
    let mut lines = Vec::new();
    for (i, n) in cone.normals().iter().enumerate() {
        let n3 = Vector3::from_column_slice(n.as_slice());
        let np = Vector2::new(n3.dot(&e1), n3.dot(&e2));
        let r = np.norm();
        if r < 1e-14 {
            continue;
        }
        let d = th.dot(&n3) / r;
        let f = -np / r;
        let foot = f.y.atan2(f.x).rem_euclid(TAU);
        lines.push(Line {
            face: i,
            d,
            foot,
            q: f / d,
        });
    }
    if lines.len() < 3 {
        return Err(Error::Unbounded { phi: 0.0 });
    }
    // The section polygon is the polar dual of conv{q_i}; its edges are the hull vertices.
    let pts: Vec<Vector2<f64>> = lines.iter().map(|l| l.q).collect();
    let hull = convex_hull(&pts);
    // bounded iff the origin is strictly inside the hull
    let m = hull.len();
    if m < 3 {
        return Err(Error::Unbounded { phi: 0.0 });
    }
    for k in 0..m {
        let a = pts[hull[k]];
        let b = pts[hull[(k + 1) % m]];
        let cross = a.x * b.y - a.y * b.x;
        if cross <= 1e-14 * a.norm() * b.norm() {
            let mid = 0.5 * (lines[hull[k]].foot + lines[hull[(k + 1) % m]].foot);
            return Err(Error::Unbounded { phi: mid });
        }
    }
    // polygon vertex between consecutive active lines (hull is CCW => increasing foot angle)
    let vertex_angle = |i: &Line, k: &Line| {
        let (ci, si) = (i.foot.cos(), i.foot.sin());
        let (ck, sk) = (k.foot.cos(), k.foot.sin());
        let det = ci * sk - si * ck;
        let x = (i.d * sk - k.d * si) / det;
        let y = (ci * k.d - ck * i.d) / det;
        y.atan2(x)
    };
    let mut arcs = Vec::with_capacity(m + 1);
    for k in 0..m {
        let prev = &lines[hull[(k + m - 1) % m]];
        let cur = &lines[hull[k]];
        let next = &lines[hull[(k + 1) % m]];
        let start = vertex_angle(prev, cur).rem_euclid(TAU);
        let mut end = vertex_angle(cur, next).rem_euclid(TAU);
        if end <= start {
            end += TAU;
        }
        let mk = |s: f64, e: f64| ProfileArc {
            start: s,
            end: e,
            face: cur.face,
            distance: cur.d,
            foot: cur.foot,
        };
        if end > TAU {
            arcs.push(mk(start, TAU));
            if end - TAU > 0.0 {
                arcs.push(mk(0.0, end - TAU));
            }
        } else {
            arcs.push(mk(start, end));
        }
    }
    arcs.retain(|a| a.end > a.start);
    arcs.sort_by(|a, b| a.start.total_cmp(&b.start));
    // close tiny gaps from rounding so the arcs tile [0, 2π) exactly
    if let Some(first) = arcs.first_mut() {
        first.start = 0.0;
    }
    for k in 1..arcs.len() {
        let s = arcs[k].start;
        arcs[k - 1].end = s;
    }
    if let Some(last) = arcs.last_mut() {
        last.end = TAU;
    }
    Ok(SectionProfile {
        theta: [th.x, th.y, th.z],
        frame: [[e1.x, e1.y, e1.z], [e2.x, e2.y, e2.z]],
        arcs,
    })
}

/// Indices of the convex hull in counterclockwise order (collinear points dropped).
fn convex_hull(p: &[Vector2<f64>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[a].x.total_cmp(&p[b].x).then(p[a].y.total_cmp(&p[b].y)));
    idx.dedup_by(|a, b| p[*a] == p[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let cross = |o: usize, a: usize, b: usize| orient([p[o].x, p[o].y], [p[a].x, p[a].y], [p[b].x, p[b].y]);
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], i) <= 0.0 {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], i) <= 0.0 {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Result of the max-min distance search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentredDirection {
    pub theta: [f64; 3],
    /// `min_i d_i(θ*)`.
    pub distance: f64,
    /// All faces are at the same distance: the section has an inscribed circle centred at θ*.
    pub inscribed: bool,
}

/// θ* maximizing `min_i d_i(θ)` for a cone in R³.
///
/// `d_i = t_i / sqrt(1 − t_i²)` with `t_i = θ·n_i` is increasing in `t_i`,
/// so this is the direction maximizing `min_i θ·n_i`.
pub fn max_min_distance_direction(cone: &PolyhedralCone) -> Result<CentredDirection> {
    if cone.dim() != 3 {
        return Err(Error::domain("max_min_distance_direction needs a cone in R^3"));
    }
    let (theta, t) = cone.chebyshev_direction()?;
    if !(t >= ADMISSIBLE_TOL) {
        return Err(Error::OptimizationFailed("no admissible direction found".into()));
    }
    let profile = section_profile(cone, theta.as_slice())?;
    let dists: Vec<f64> = cone
        .normals()
        .iter()
        .filter_map(|n| {
            let c = n.dot(&theta);
            let r2 = 1.0 - c * c;
            (r2 > 1e-28).then(|| c / r2.sqrt())
        })
        .collect();
    let lo = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = dists.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CentredDirection {
        theta: profile.theta,
        distance: profile.min_distance(),
        inscribed: hi - lo <= INSCRIBED_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn octant_theta() -> [f64; 3] {
        let s = 1.0 / 3f64.sqrt();
        [s, s, s]
    }

    #[test]
    fn polygon_validation() {
        assert!(PlanarPolygon::with_unit_weight(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
        let bowtie = PlanarPolygon::with_unit_weight(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(bowtie, Err(Error::InvalidPolygon { .. })));
        let dup = PlanarPolygon::with_unit_weight(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(dup.is_err());
        let zero_weight = PlanarPolygon::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], Some(vec![0.0, -1.0, 0.0]));
        assert_eq!(zero_weight.unwrap_err(), Error::NoPositiveWeight);
    }

    #[test]
    fn clockwise_input_is_reoriented_with_weights() {
        let p = PlanarPolygon::new(
            vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]],
            Some(vec![1.0, 2.0, 3.0, 4.0]),
        )
        .unwrap();
        assert!(p.signed_area() > 0.0);
        // the edge (0,1)-(1,1) had weight 2 and must keep it
        for i in 0..4 {
            let (a, b) = p.edge(i);
            let is_top = (a[1] == 1.0) && (b[1] == 1.0);
            if is_top {
                assert_eq!(p.weights()[i], 2.0);
            }
        }
    }

    #[test]
    fn square_and_l_shape_angles() {
        let sq = PlanarPolygon::unit_square();
        for a in sq.half_angles() {
            assert_relative_eq!(a, PI / 4.0, epsilon = 1e-14);
        }
        let l = PlanarPolygon::l_shape();
        let mut reentrant = 0;
        for a in l.half_angles() {
            if (a - 3.0 * PI / 4.0).abs() < 1e-12 {
                reentrant += 1;
            } else {
                assert_relative_eq!(a, PI / 4.0, epsilon = 1e-14);
            }
        }
        assert_eq!(reentrant, 1);
        assert_relative_eq!(l.area(), 0.75);
        assert_relative_eq!(sq.perimeter(), 4.0);
    }

    #[test]
    fn distance_and_containment() {
        let sq = PlanarPolygon::unit_square();
        assert_relative_eq!(sq.distance_to_boundary([0.3, 0.5]), 0.3);
        assert!(sq.contains([0.5, 0.5]));
        assert!(!sq.contains([1.5, 0.5]));
        let l = PlanarPolygon::l_shape();
        assert!(!l.contains([0.75, 0.75]));
    }

    #[test]
    fn octant_profile() {
        let cone = PolyhedralCone::orthant(3);
        let p = section_profile(&cone, &octant_theta()).unwrap();
        let faces = p.face_distances();
        assert_eq!(faces.len(), 3);
        for (_, d) in faces {
            assert_relative_eq!(d, 1.0 / 2f64.sqrt(), epsilon = 1e-14);
        }
        let total: f64 = p.arcs.iter().map(|a| a.end - a.start).sum();
        assert_relative_eq!(total, TAU, epsilon = 1e-12);
        // each face covers a third of the circle
        let mut per_face = [0.0; 3];
        for a in &p.arcs {
            per_face[a.face] += a.end - a.start;
        }
        for w in per_face {
            assert_relative_eq!(w, TAU / 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn octant_boundary_direction_is_not_interior() {
        let cone = PolyhedralCone::orthant(3);
        let r = section_profile(&cone, &[1.0, 0.0, 0.0]);
        assert!(matches!(r, Err(Error::NotInterior { .. })));
    }

    #[test]
    fn circular_cone_profile_is_constant() {
        let alpha = 0.4;
        let cone = PolyhedralCone::circular(alpha, 256).unwrap();
        let p = section_profile(&cone, &[0.0, 0.0, 1.0]).unwrap();
        for k in 0..50 {
            let phi = TAU * k as f64 / 50.0;
            let b = p.b(phi);
            assert!((b - alpha.tan()).abs() < 1e-3 * alpha.tan());
            assert!(b >= alpha.tan() - 1e-14);
        }
        assert_relative_eq!(p.min_distance(), alpha.tan(), epsilon = 1e-13);
    }

    #[test]
    fn profile_is_continuous_and_matches_face_formula() {
        let cone = PolyhedralCone::new(vec![
            vec![1.0, 0.0, 0.3],
            vec![0.0, 1.0, 0.1],
            vec![-1.0, 0.2, 0.9],
            vec![0.1, -1.0, 0.7],
        ])
        .unwrap();
        let th = [0.1, 0.05, 1.0];
        let p = section_profile(&cone, &th).unwrap();
        let thv = Vector3::from(th).normalize();
        let e1 = Vector3::from(p.frame[0]);
        let e2 = Vector3::from(p.frame[1]);
        for k in 0..720 {
            let phi = TAU * (k as f64 + 0.37) / 720.0;
            let u = e1 * phi.cos() + e2 * phi.sin();
            let direct = cone
                .normals()
                .iter()
                .filter_map(|n| {
                    let n = Vector3::from_column_slice(n.as_slice());
                    let un = u.dot(&n);
                    (un < 0.0).then(|| -thv.dot(&n) / un)
                })
                .fold(f64::INFINITY, f64::min);
            assert_relative_eq!(p.b(phi), direct, max_relative = 1e-12);
        }
        for w in p.arcs.windows(2) {
            let joint = w[1].start;
            assert_relative_eq!(w[0].b(joint), w[1].b(joint), max_relative = 1e-9);
        }
    }

    #[test]
    fn wedge_section_is_unbounded() {
        let cone = PolyhedralCone::wedge(PI / 3.0).unwrap();
        let r = section_profile(&cone, &[1.0, 0.0, 0.0]);
        assert!(matches!(r, Err(Error::Unbounded { .. })));
        let r = max_min_distance_direction(&cone);
        assert!(matches!(
            r,
            Err(Error::Unbounded { .. }) | Err(Error::OptimizationFailed(_))
        ));
    }

    #[test]
    fn octant_centred_direction() {
        let c = max_min_distance_direction(&PolyhedralCone::orthant(3)).unwrap();
        for (x, y) in c.theta.iter().zip(octant_theta()) {
            assert_relative_eq!(*x, y, epsilon = 1e-10);
        }
        assert_relative_eq!(c.distance, 1.0 / 2f64.sqrt(), epsilon = 1e-10);
        assert!(c.inscribed);
    }

    #[test]
    fn spherical_triangle_is_inscribed() {
        let v = |x: f64, y: f64| {
            let n = (x * x + y * y + 1.0).sqrt();
            [x / n, y / n, 1.0 / n]
        };
        let cone = PolyhedralCone::over_spherical_polygon(&[v(-0.4, -0.3), v(0.7, -0.2), v(0.1, 0.5)]).unwrap();
        let c = max_min_distance_direction(&cone).unwrap();
        assert!(c.inscribed);
        let p = section_profile(&cone, &c.theta).unwrap();
        let ds: Vec<f64> = p.face_distances().into_iter().map(|x| x.1).collect();
        for d in &ds {
            assert!((d - ds[0]).abs() < INSCRIBED_TOL);
        }
    }

    #[test]
    fn square_section_cone_without_incircle_is_not_flagged() {
        // spherical rectangle, long in x: no circle touches all four sides
        let v = |x: f64, y: f64| {
            let n = (x * x + y * y + 1.0).sqrt();
            [x / n, y / n, 1.0 / n]
        };
        let cone =
            PolyhedralCone::over_spherical_polygon(&[v(-0.9, -0.2), v(0.9, -0.2), v(0.9, 0.2), v(-0.9, 0.2)]).unwrap();
        let c = max_min_distance_direction(&cone).unwrap();
        assert!(!c.inscribed);
    }

    #[test]
    fn classification() {
        assert_eq!(
            PolyhedralCone::new(vec![vec![0.0, 0.0, 1.0]])
                .unwrap()
                .classify()
                .unwrap(),
            ConeClass::HalfSpace
        );
        match PolyhedralCone::wedge(0.6).unwrap().classify().unwrap() {
            ConeClass::Wedge { alpha } => assert_relative_eq!(alpha, 0.6, epsilon = 1e-12),
            other => panic!("{other:?}"),
        }
        match PolyhedralCone::orthant(3).classify().unwrap() {
            ConeClass::Vertex { codim, .. } => assert_eq!(codim, 3),
            other => panic!("{other:?}"),
        }
        // R × octant in R^4 reduces to a codimension-3 vertex
        let c = PolyhedralCone::new(vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        match c.classify().unwrap() {
            ConeClass::Vertex { codim, reduced } => {
                assert_eq!(codim, 3);
                assert_eq!(reduced.dim(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_interior_rejected() {
        let r = PolyhedralCone::new(vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]]);
        assert!(r.is_err());
    }

    #[test]
    fn cone_json_round_trip() {
        let cone: PolyhedralCone = serde_json::from_str(r#"{"dim": 3, "normals": [[2,0,0],[0,1,0],[0,0,1]]}"#).unwrap();
        assert_relative_eq!(cone.normals()[0][0], 1.0);
        let s = serde_json::to_string(&cone).unwrap();
        let back: PolyhedralCone = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cone);
    }

    fn perturbed_octant(p: [f64; 6]) -> PolyhedralCone {
        PolyhedralCone::new(vec![
            vec![1.0, p[0], p[1]],
            vec![p[2], 1.0, p[3]],
            vec![p[4], p[5], 1.0],
        ])
        .unwrap()
    }

    proptest::proptest! {
        #[test]
        fn profile_minimum_is_min_face_distance(
            p in proptest::array::uniform6(-0.3f64..0.3),
            t in proptest::array::uniform3(-0.2f64..0.2),
        ) {
            let cone = perturbed_octant(p);
            let th = [1.0 + t[0], 1.0 + t[1], 1.0 + t[2]];
            let prof = section_profile(&cone, &th).unwrap();
            let dmin = prof.min_distance();
            let sampled = (0..2000).map(|k| prof.b(TAU * k as f64 / 2000.0)).fold(f64::INFINITY, f64::min);
            proptest::prop_assert!(sampled >= dmin * (1.0 - 1e-12));
            proptest::prop_assert!(sampled <= dmin * (1.0 + 1e-3));
            for a in &prof.arcs {
                // an arc whose foot lies inside it attains its distance there
                if a.foot >= a.start && a.foot < a.end {
                    proptest::prop_assert!((prof.b(a.foot) - a.distance).abs() <= 1e-12 * a.distance);
                }
            }
        }

        #[test]
        fn face_distances_invariant_under_rotation(
            p in proptest::array::uniform6(-0.3f64..0.3),
            t in proptest::array::uniform3(-0.2f64..0.2),
            axis in proptest::array::uniform3(-1.0f64..1.0),
            angle in 0.0f64..TAU,
        ) {
            let axis = Vector3::from(axis);
            proptest::prop_assume!(axis.norm() > 1e-3);
            let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            let q = DMatrix::from_fn(3, 3, |i, j| rot.matrix()[(i, j)]);
            let cone = perturbed_octant(p);
            let th = Vector3::new(1.0 + t[0], 1.0 + t[1], 1.0 + t[2]);
            let th_rot = rot * th;
            let sorted = |prof: SectionProfile| {
                let mut d: Vec<(usize, f64)> = prof.face_distances();
                d.sort_by_key(|x| x.0);
                d
            };
            let a = sorted(section_profile(&cone, &[th.x, th.y, th.z]).unwrap());
            let b = sorted(section_profile(&cone.rotated(&q), &[th_rot.x, th_rot.y, th_rot.z]).unwrap());
            proptest::prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                proptest::prop_assert_eq!(x.0, y.0);
                proptest::prop_assert!((x.1 - y.1).abs() <= 1e-10, "{} vs {}", x.1, y.1);
            }
        }
    }
}
