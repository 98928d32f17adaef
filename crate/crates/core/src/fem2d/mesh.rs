//! Conforming Delaunay meshes of polygons by Ruppert refinement, with an
//! optional boundary layer graded to the decay length 1/γ.

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, PlanarPolygon};
use robust::{incircle, orient2d, Coord};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt::Write as _;

/// Quality target for refinement; Ruppert's algorithm terminates for any
/// bound up to ≈ 20.7° when input angles are at least 60°.
pub const MIN_ANGLE_DEG: f64 = 20.0;
/// Element size near Γ is `LAYER_FACTOR / γ`.
pub const LAYER_FACTOR: f64 = 0.2;
/// The layer extends `LAYER_WIDTH / γ` into Ω.
pub const LAYER_WIDTH: f64 = 3.0;
/// Size growth rate away from the layer.
const GRADATION: f64 = 0.3;
const MAX_VERTICES: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    /// G on this edge.
    pub weight: f64,
    /// Index of the polygon edge this piece lies on.
    pub parent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise index triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Longest edge in the mesh.
    pub h_max: f64,
    /// Longest edge of a triangle touching the boundary layer (or Γ).
    pub h_boundary: f64,
}

/// Size policy for `mesh_polygon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshPolicy {
    /// Interior element size.
    pub h: f64,
    /// Element size near Γ is `layer_factor / γ`.
    pub layer_factor: f64,
    /// Layer width in units of 1/γ.
    pub layer_width: f64,
}

impl Default for MeshPolicy {
    fn default() -> Self {
        Self {
            h: 0.1,
            layer_factor: LAYER_FACTOR,
            layer_width: LAYER_WIDTH,
        }
    }
}

impl MeshPolicy {
    /// Target size near Γ for parameter γ.
    pub fn boundary_size(&self, gamma: Option<f64>) -> f64 {
        match gamma {
            Some(g) if g > 0.0 => self.h.min(self.layer_factor / g),
            _ => self.h,
        }
    }

    fn size_at(&self, gamma: Option<f64>, dist: f64) -> f64 {
        match gamma {
            Some(g) if g > 0.0 => {
                let hb = self.boundary_size(gamma);
                let excess = (dist - self.layer_width / g).max(0.0);
                self.h.min(hb + GRADATION * excess)
            }
            _ => self.h,
        }
    }
}

/// Meshes the polygon with target size `h`; with `boundary_layer = Some(γ)`
/// elements within 3/γ of Γ are at most min(h, 0.2/γ).
pub fn mesh_polygon(polygon: &PlanarPolygon, h: f64, boundary_layer: Option<f64>) -> Result<Mesh> {
    mesh_polygon_with(
        polygon,
        &MeshPolicy {
            h,
            ..MeshPolicy::default()
        },
        boundary_layer,
    )
}

pub fn mesh_polygon_with(polygon: &PlanarPolygon, policy: &MeshPolicy, boundary_layer: Option<f64>) -> Result<Mesh> {
    if !(policy.h > 0.0) || !policy.h.is_finite() {
        return Err(Error::domain(format!("mesh size must be positive, got {}", policy.h)));
    }
    if let Some(g) = boundary_layer {
        if !(g >= 0.0) || !g.is_finite() {
            return Err(Error::domain(format!(
                "boundary-layer gamma must be non-negative, got {g}"
            )));
        }
    }
    if !(policy.layer_factor > 0.0 && policy.layer_width >= 0.0) {
        return Err(Error::domain(
            "layer factor must be positive and layer width non-negative",
        ));
    }
    // re-validate: a deserialized polygon could bypass the constructor
    let polygon = PlanarPolygon::new(polygon.vertices().to_vec(), Some(polygon.weights().to_vec()))?;
    let mut r = Refiner::new(&polygon, *policy, boundary_layer)?;
    r.refine()?;
    r.extract()
}

// ---------------------------------------------------------------------------
// Incremental Delaunay triangulation

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Tri {
    v: [usize; 3],
    /// n[i] is the neighbour across the edge opposite v[i].
    n: [usize; 3],
    alive: bool,
}

struct Delaunay {
    pts: Vec<[f64; 2]>,
    tris: Vec<Tri>,
    vert_tri: Vec<usize>,
    last: usize,
}

fn coord(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

impl Delaunay {
    fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let r = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300) * 50.0;
        let pts = vec![
            [c[0] - 2.0 * r, c[1] - r],
            [c[0] + 2.0 * r, c[1] - r],
            [c[0], c[1] + 2.0 * r],
        ];
        Self {
            pts,
            tris: vec![Tri {
                v: [0, 1, 2],
                n: [NONE; 3],
                alive: true,
            }],
            vert_tri: vec![0, 0, 0],
            last: 0,
        }
    }

    fn orient(&self, a: usize, b: usize, p: [f64; 2]) -> f64 {
        orient2d(coord(self.pts[a]), coord(self.pts[b]), coord(p))
    }

    fn in_circle(&self, t: usize, p: [f64; 2]) -> bool {
        let [a, b, c] = self.tris[t].v;
        incircle(coord(self.pts[a]), coord(self.pts[b]), coord(self.pts[c]), coord(p)) > 0.0
    }

    /// Visibility walk to a triangle containing p.
    fn locate(&self, p: [f64; 2], start: usize) -> Option<usize> {
        let mut t = if start < self.tris.len() && self.tris[start].alive {
            start
        } else {
            self.last
        };
        for _ in 0..4 * self.tris.len() + 16 {
            let tri = &self.tris[t];
            let mut moved = false;
            for i in 0..3 {
                let (a, b) = (tri.v[(i + 1) % 3], tri.v[(i + 2) % 3]);
                if self.orient(a, b, p) < 0.0 {
                    if tri.n[i] == NONE {
                        return None;
                    }
                    t = tri.n[i];
                    moved = true;
                    break;
                }
            }
            if !moved {
                return Some(t);
            }
        }
        None
    }

    /// Bowyer–Watson insertion. Returns the new vertex and triangles.
    fn insert(&mut self, p: [f64; 2], hint: usize) -> Option<(usize, Vec<usize>)> {
        let t0 = self.locate(p, hint)?;
        // reject duplicates
        for &v in &self.tris[t0].v {
            let q = self.pts[v];
            if q == p {
                return None;
            }
        }
        let mut cavity = vec![t0];
        let mut in_cavity = std::collections::HashSet::from([t0]);
        let mut k = 0;
        while k < cavity.len() {
            let t = cavity[k];
            k += 1;
            for &nb in &self.tris[t].n {
                if nb != NONE && !in_cavity.contains(&nb) && self.in_circle(nb, p) {
                    in_cavity.insert(nb);
                    cavity.push(nb);
                }
            }
        }
        // boundary edges of the cavity, oriented counter-clockwise
        let mut rim = Vec::new();
        for &t in &cavity {
            let tri = &self.tris[t];
            for i in 0..3 {
                let nb = tri.n[i];
                if nb == NONE || !in_cavity.contains(&nb) {
                    rim.push((tri.v[(i + 1) % 3], tri.v[(i + 2) % 3], nb));
                }
            }
        }
        // the cavity must be star-shaped from p
        if rim.iter().any(|&(a, b, _)| self.orient(a, b, p) <= 0.0) {
            return None;
        }
        let vid = self.pts.len();
        self.pts.push(p);
        self.vert_tri.push(NONE);
        for &t in &cavity {
            self.tris[t].alive = false;
        }
        let mut created = Vec::with_capacity(rim.len());
        let mut reuse = cavity.clone();
        for &(a, b, outside) in &rim {
            let id = if let Some(id) = reuse.pop() {
                self.tris[id] = Tri {
                    v: [vid, a, b],
                    n: [outside, NONE, NONE],
                    alive: true,
                };
                id
            } else {
                self.tris.push(Tri {
                    v: [vid, a, b],
                    n: [outside, NONE, NONE],
                    alive: true,
                });
                self.tris.len() - 1
            };
            if outside != NONE {
                let o = &mut self.tris[outside];
                for j in 0..3 {
                    let (x, y) = (o.v[(j + 1) % 3], o.v[(j + 2) % 3]);
                    if x == b && y == a {
                        o.n[j] = id;
                    }
                }
            }
            self.vert_tri[a] = id;
            self.vert_tri[b] = id;
            created.push((id, a, b));
        }
        // link spokes: triangle (vid, a, b) has edge (b, vid) opposite a
        // which is shared with the triangle whose rim edge starts at b
        let start_of: std::collections::HashMap<usize, usize> = created.iter().map(|&(id, a, _)| (a, id)).collect();
        for &(id, _, b) in &created {
            let next = start_of[&b];
            self.tris[id].n[1] = next;
            self.tris[next].n[2] = id;
        }
        // cavity slots that were not reused stay dead
        for id in reuse {
            self.tris[id].alive = false;
        }
        self.vert_tri[vid] = created[0].0;
        self.last = created[0].0;
        Some((vid, created.into_iter().map(|c| c.0).collect()))
    }

    /// Triangles on either side of the edge (a, b), if it is an edge.
    fn edge_triangles(&self, a: usize, b: usize) -> Option<[usize; 2]> {
        let start = self.vert_tri[a];
        let mut t = start;
        let mut found = Vec::with_capacity(2);
        for _ in 0..10_000 {
            let tri = &self.tris[t];
            let i = tri.v.iter().position(|&x| x == a)?;
            if tri.v[(i + 1) % 3] == b || tri.v[(i + 2) % 3] == b {
                found.push(t);
                if found.len() == 2 {
                    break;
                }
            }
            // rotate around a across the edge (a, v[i+1])
            let next = tri.n[(i + 2) % 3];
            if next == NONE || next == start {
                break;
            }
            t = next;
        }
        if found.len() == 2 {
            Some([found[0], found[1]])
        } else {
            None
        }
    }
}

// ---------------------------------------------------------------------------
// Ruppert refinement

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: usize,
    b: usize,
    parent: usize,
}

struct Refiner<'a> {
    polygon: &'a PlanarPolygon,
    policy: MeshPolicy,
    gamma: Option<f64>,
    dt: Delaunay,
    segments: Vec<Segment>,
    /// Input-vertex angle (radians) for each polygon vertex id in `dt`.
    input_angle: Vec<f64>,
    offset: usize,
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn circumcenter(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    let (bx, by) = (b[0] - a[0], b[1] - a[1]);
    let (cx, cy) = (c[0] - a[0], c[1] - a[1]);
    let d = 2.0 * (bx * cy - by * cx);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    [a[0] + (cy * b2 - by * c2) / d, a[1] + (bx * c2 - cx * b2) / d]
}

/// Smallest interior angle (radians) and longest edge of a triangle.
pub fn triangle_shape(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> (f64, f64) {
    let la = dist(b, c);
    let lb = dist(c, a);
    let lc = dist(a, b);
    let angle = |opp: f64, s1: f64, s2: f64| {
        ((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2))
            .clamp(-1.0, 1.0)
            .acos()
    };
    let min = angle(la, lb, lc).min(angle(lb, lc, la)).min(angle(lc, la, lb));
    (min, la.max(lb).max(lc))
}

impl<'a> Refiner<'a> {
    fn new(polygon: &'a PlanarPolygon, policy: MeshPolicy, gamma: Option<f64>) -> Result<Self> {
        let vs = polygon.vertices();
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in vs {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let mut dt = Delaunay::new(lo, hi);
        let offset = dt.pts.len();
        for (i, &v) in vs.iter().enumerate() {
            let hint = dt.last;
            match dt.insert(v, hint) {
                Some((id, _)) if id == offset + i => {}
                _ => {
                    return Err(Error::MeshFailure {
                        vertex: i,
                        reason: "could not insert polygon vertex".into(),
                    })
                }
            }
        }
        let n = vs.len();
        let segments = (0..n)
            .map(|i| Segment {
                a: offset + i,
                b: offset + (i + 1) % n,
                parent: i,
            })
            .collect();
        let input_angle = polygon.half_angles().iter().map(|h| 2.0 * h).collect();
        Ok(Self {
            polygon,
            policy,
            gamma,
            dt,
            segments,
            input_angle,
            offset,
        })
    }

    fn is_super(&self, v: usize) -> bool {
        v < self.offset
    }

    fn encroached(&self, s: &Segment) -> bool {
        let (pa, pb) = (self.dt.pts[s.a], self.dt.pts[s.b]);
        match self.dt.edge_triangles(s.a, s.b) {
            None => true,
            Some(ts) => ts.iter().any(|&t| {
                let &v = self.dt.tris[t].v.iter().find(|&&v| v != s.a && v != s.b).unwrap();
                if self.is_super(v) {
                    return false;
                }
                let q = self.dt.pts[v];
                (pa[0] - q[0]) * (pb[0] - q[0]) + (pa[1] - q[1]) * (pb[1] - q[1]) <= 0.0
            }),
        }
    }

    fn point_encroaches(&self, s: &Segment, p: [f64; 2]) -> bool {
        let (pa, pb) = (self.dt.pts[s.a], self.dt.pts[s.b]);
        (pa[0] - p[0]) * (pb[0] - p[0]) + (pa[1] - p[1]) * (pb[1] - p[1]) < 0.0
    }

    fn split_segment(&mut self, k: usize) -> Result<Vec<usize>> {
        let s = self.segments[k];
        let (pa, pb) = (self.dt.pts[s.a], self.dt.pts[s.b]);
        // split at the midpoint, except next to a sharp input corner where
        // concentric shells (power-of-two distances from the corner) are used
        let mut t = 0.5;
        let len = dist(pa, pb);
        let sharp = |v: usize| {
            v >= self.offset
                && v < self.offset + self.polygon.len()
                && self.input_angle[v - self.offset] < std::f64::consts::FRAC_PI_3 + 1e-9
        };
        if sharp(s.a) != sharp(s.b) && len > 0.0 {
            let shell = 2f64.powf((0.5 * len).log2().round());
            t = (shell / len).clamp(0.25, 0.75);
            if sharp(s.b) {
                t = 1.0 - t;
            }
        }
        let p = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
        let hint = self.dt.vert_tri[s.a];
        let (v, created) = self.dt.insert(p, hint).ok_or_else(|| Error::MeshFailure {
            vertex: s.a.saturating_sub(self.offset),
            reason: "segment split failed".into(),
        })?;
        self.segments[k] = Segment {
            a: s.a,
            b: v,
            parent: s.parent,
        };
        self.segments.push(Segment {
            a: v,
            b: s.b,
            parent: s.parent,
        });
        Ok(created)
    }

    fn target_size(&self, tri: &[usize; 3]) -> f64 {
        let pts = tri.map(|v| self.dt.pts[v]);
        let (_, longest) = triangle_shape(pts[0], pts[1], pts[2]);
        if self.gamma.is_none() {
            return self.policy.h;
        }
        // the whole triangle lies within `longest` of any vertex
        let d = pts
            .iter()
            .map(|&p| self.polygon.distance_to_boundary(p))
            .fold(f64::INFINITY, f64::min);
        self.policy.size_at(self.gamma, (d - longest).max(0.0))
    }

    fn inside(&self, t: usize) -> bool {
        let tri = &self.dt.tris[t];
        if tri.v.iter().any(|&v| self.is_super(v)) {
            return false;
        }
        let p = tri.v.map(|v| self.dt.pts[v]);
        let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
        self.polygon.contains(c)
    }

    /// Whether a triangle is too large or too skinny; skinny triangles
    /// nestled in a sharp input corner are left alone.
    fn is_bad(&self, t: usize) -> bool {
        let tri = &self.dt.tris[t];
        let p = tri.v.map(|v| self.dt.pts[v]);
        let (min_angle, longest) = triangle_shape(p[0], p[1], p[2]);
        if longest > self.target_size(&tri.v) {
            return true;
        }
        if min_angle >= MIN_ANGLE_DEG.to_radians() {
            return false;
        }
        let sharp_corner = tri.v.iter().any(|&v| {
            v >= self.offset
                && v < self.offset + self.polygon.len()
                && self.input_angle[v - self.offset] < std::f64::consts::FRAC_PI_3 + 1e-9
        });
        !sharp_corner
    }

    fn refine(&mut self) -> Result<()> {
        let mut queue: VecDeque<usize> = (0..self.dt.tris.len()).collect();
        let mut seg_queue: VecDeque<usize> = (0..self.segments.len()).collect();
        loop {
            if self.dt.pts.len() > MAX_VERTICES {
                return Err(Error::MeshFailure {
                    vertex: 0,
                    reason: format!("refinement exceeded {MAX_VERTICES} vertices"),
                });
            }
            if let Some(k) = seg_queue.pop_front() {
                if self.encroached(&self.segments[k]) {
                    let created = self.split_segment(k)?;
                    seg_queue.push_back(k);
                    seg_queue.push_back(self.segments.len() - 1);
                    self.requeue_after(&created, &mut queue, &mut seg_queue);
                }
                continue;
            }
            let Some(t) = queue.pop_front() else { break };
            if !self.dt.tris[t].alive || !self.inside(t) || !self.is_bad(t) {
                continue;
            }
            let tri = self.dt.tris[t].v.map(|v| self.dt.pts[v]);
            let c = circumcenter(tri[0], tri[1], tri[2]);
            let hit: Vec<usize> = (0..self.segments.len())
                .filter(|&k| self.point_encroaches(&self.segments[k], c))
                .collect();
            if !hit.is_empty() {
                // split the segments the circumcentre would encroach instead
                for k in hit {
                    let created = self.split_segment(k)?;
                    seg_queue.push_back(k);
                    seg_queue.push_back(self.segments.len() - 1);
                    self.requeue_after(&created, &mut queue, &mut seg_queue);
                }
                queue.push_back(t);
                continue;
            }
            if !self.polygon.contains(c) {
                // cannot happen for a conforming triangulation; skip defensively
                continue;
            }
            match self.dt.insert(c, t) {
                Some((_, created)) => self.requeue_after(&created, &mut queue, &mut seg_queue),
                None => continue,
            }
        }
        Ok(())
    }

    fn requeue_after(&self, created: &[usize], queue: &mut VecDeque<usize>, seg_queue: &mut VecDeque<usize>) {
        queue.extend(created.iter().copied());
        // a new vertex can encroach only segments with an endpoint in its star
        let mut touched = std::collections::HashSet::new();
        for &t in created {
            for &v in &self.dt.tris[t].v {
                touched.insert(v);
            }
        }
        for (k, s) in self.segments.iter().enumerate() {
            if touched.contains(&s.a) || touched.contains(&s.b) {
                seg_queue.push_back(k);
            }
        }
    }

    fn extract(self) -> Result<Mesh> {
        let mut map = vec![NONE; self.dt.pts.len()];
        let mut nodes = Vec::new();
        let mut triangles = Vec::new();
        for t in 0..self.dt.tris.len() {
            if !self.dt.tris[t].alive || !self.inside(t) {
                continue;
            }
            let tri = self.dt.tris[t].v.map(|v| {
                if map[v] == NONE {
                    map[v] = nodes.len();
                    nodes.push(self.dt.pts[v]);
                }
                map[v]
            });
            triangles.push(tri);
        }
        let weights = self.polygon.weights();
        let mut boundary_edges = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            if map[s.a] == NONE || map[s.b] == NONE {
                return Err(Error::MeshFailure {
                    vertex: s.parent,
                    reason: "boundary segment not covered by the mesh".into(),
                });
            }
            boundary_edges.push(BoundaryEdge {
                nodes: [map[s.a], map[s.b]],
                weight: weights[s.parent],
                parent: s.parent,
            });
        }
        boundary_edges.sort_by(|x, y| {
            x.parent.cmp(&y.parent).then_with(|| {
                let o = nodes[x.nodes[0]];
                let a = self.polygon.vertices()[x.parent];
                dist(o, a).total_cmp(&dist(nodes[y.nodes[0]], a))
            })
        });
        let mut mesh = Mesh {
            nodes,
            triangles,
            boundary_edges,
            h_max: 0.0,
            h_boundary: 0.0,
        };
        mesh.update_sizes(self.gamma.map(|g| self.policy.layer_width / g));
        mesh.validate()?;
        Ok(mesh)
    }
}

// ---------------------------------------------------------------------------
// Mesh queries and I/O

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.triangle_area(t)).sum()
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges
            .iter()
            .map(|e| dist(self.nodes[e.nodes[0]], self.nodes[e.nodes[1]]))
            .sum()
    }

    pub fn triangle_area(&self, t: &[usize; 3]) -> f64 {
        let [a, b, c] = t.map(|v| self.nodes[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }

    /// Smallest angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|v| self.nodes[v]);
                triangle_shape(a, b, c).0.to_degrees()
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        self.boundary_edges
            .iter()
            .map(|e| point_segment_distance(p, self.nodes[e.nodes[0]], self.nodes[e.nodes[1]]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Recomputes `h_max` and `h_boundary`; the latter is taken over
    /// triangles with a vertex within `layer` of Γ (or touching Γ).
    fn update_sizes(&mut self, layer: Option<f64>) {
        let mut on_boundary = vec![false; self.nodes.len()];
        for e in &self.boundary_edges {
            on_boundary[e.nodes[0]] = true;
            on_boundary[e.nodes[1]] = true;
        }
        let near: Vec<bool> = match layer {
            Some(w) => self
                .nodes
                .iter()
                .zip(&on_boundary)
                .map(|(&p, &b)| b || self.boundary_distance(p) < w)
                .collect(),
            None => on_boundary,
        };
        let mut h_max = 0.0f64;
        let mut h_b = 0.0f64;
        for t in &self.triangles {
            let [a, b, c] = t.map(|v| self.nodes[v]);
            let l = dist(a, b).max(dist(b, c)).max(dist(c, a));
            h_max = h_max.max(l);
            if t.iter().any(|&v| near[v]) {
                h_b = h_b.max(l);
            }
        }
        self.h_max = h_max;
        self.h_boundary = h_b;
    }

    /// Checks positivity of areas, conformity and boundary coverage.
    pub fn validate(&self) -> Result<()> {
        use std::collections::HashMap;
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= self.nodes.len()) {
                return Err(Error::MeshFailure {
                    vertex: k,
                    reason: "triangle references a missing node".into(),
                });
            }
            if !(self.triangle_area(t) > 0.0) {
                return Err(Error::MeshFailure {
                    vertex: t[0],
                    reason: format!("triangle {k} has non-positive area"),
                });
            }
        }
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut boundary: HashMap<(usize, usize), usize> = HashMap::new();
        for e in &self.boundary_edges {
            let [a, b] = e.nodes;
            *boundary.entry((a.min(b), a.max(b))).or_default() += 1;
        }
        for (&(a, b), &count) in &edges {
            let expected = if boundary.contains_key(&(a, b)) { 1 } else { 2 };
            if count > 2 {
                return Err(Error::MeshFailure {
                    vertex: a,
                    reason: format!("edge ({a}, {b}) shared by {count} triangles"),
                });
            }
            if count != expected {
                return Err(Error::MeshFailure {
                    vertex: a,
                    reason: format!("edge ({a}, {b}) is a hanging or uncovered boundary edge"),
                });
            }
        }
        for (&(a, b), &count) in &boundary {
            if count != 1 || !edges.contains_key(&(a, b)) {
                return Err(Error::MeshFailure {
                    vertex: a,
                    reason: format!("boundary edge ({a}, {b}) is not a mesh edge"),
                });
            }
        }
        Ok(())
    }

    /// Splits every triangle into four through the edge midpoints. The
    /// discrete space of the result contains that of `self`.
    pub fn refine_uniform(&self) -> Mesh {
        use std::collections::HashMap;
        let mut nodes = self.nodes.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<[f64; 2]>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut nodes);
            let bc = midpoint(b, c, &mut nodes);
            let ca = midpoint(c, a, &mut nodes);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        for e in &self.boundary_edges {
            let m = midpoint(e.nodes[0], e.nodes[1], &mut nodes);
            boundary_edges.push(BoundaryEdge {
                nodes: [e.nodes[0], m],
                ..*e
            });
            boundary_edges.push(BoundaryEdge {
                nodes: [m, e.nodes[1]],
                ..*e
            });
        }
        Mesh {
            nodes,
            triangles,
            boundary_edges,
            h_max: 0.5 * self.h_max,
            h_boundary: 0.5 * self.h_boundary,
        }
    }

    /// Flat text: node count then `x y` lines, triangle count then `i j k`
    /// lines, boundary edge count then `i j g` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{} {}", p[0], p[1]);
        }
        let _ = writeln!(s, "{}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "{}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], e.weight);
        }
        s
    }

    /// Parses the flat text format. Parent edge ids are not stored there,
    /// so they are numbered by the order of the boundary edges.
    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| -> Result<&str> {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of input reading {what}")))
        };
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse(format!("invalid {what}: {s:?}")))
        }
        let n: usize = num(next("node count")?, "node count")?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = num(next("x")?, "coordinate")?;
            let y: f64 = num(next("y")?, "coordinate")?;
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::Parse("non-finite coordinate".into()));
            }
            nodes.push([x, y]);
        }
        let nt: usize = num(next("triangle count")?, "triangle count")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let mut t = [0usize; 3];
            for v in &mut t {
                *v = num(next("triangle index")?, "triangle index")?;
            }
            triangles.push(t);
        }
        let nb: usize = num(next("boundary edge count")?, "boundary edge count")?;
        let mut boundary_edges = Vec::with_capacity(nb);
        for k in 0..nb {
            let a: usize = num(next("edge index")?, "edge index")?;
            let b: usize = num(next("edge index")?, "edge index")?;
            let g: f64 = num(next("edge weight")?, "edge weight")?;
            boundary_edges.push(BoundaryEdge {
                nodes: [a, b],
                weight: g,
                parent: k,
            });
        }
        if next("end").is_ok() {
            return Err(Error::Parse("trailing data after boundary edges".into()));
        }
        let mut mesh = Mesh {
            nodes,
            triangles,
            boundary_edges,
            h_max: 0.0,
            h_boundary: 0.0,
        };
        mesh.validate()?;
        mesh.update_sizes(None);
        Ok(mesh)
    }
}
