//! Corner constants C_y = −Λ(K_y; 1) and the domain constant
//! C_Ω = sup G(y)² C_y.
//!
//! Planar angles and wedges have closed forms. For vertices of co-dimension
//! j ≥ 3 only two-sided bounds are available:
//!
//! ```text
//! sup_θ (∫ b^{j−1} Σ / ∫ b^{j−1})²  ≤  C_y  ≤  inf_θ sup_φ Σ²
//! ```
//!
//! where b = b_θ is the section profile and Σ (σ when j = 3) the boundary
//! area factor. The bounds coincide when the section has an inscribed
//! circle (ball) centred at θ.

use crate::error::{Error, Result};
use crate::geometry::{
    max_min_distance_direction, section_profile, ConeClass, CornerDescriptor, CornerKind, PolyhedralCone,
    SectionProfile, ADMISSIBLE_TOL,
};
use crate::optimize::{maximize_on_sphere, orthonormal_complement, NelderMeadOptions};
use crate::quadrature::Adaptive;
use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Relative gap below which the two bounds are reported as exact.
pub const EXACT_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeBounds {
    pub lower: f64,
    pub upper: f64,
    pub exact: bool,
    pub theta_lower: Vec<f64>,
    pub theta_upper: Vec<f64>,
    /// Optimal decay rate of the test function exp(−aξ) at `theta_lower`.
    pub a_opt: f64,
}

impl ConeBounds {
    pub fn new(lower: f64, upper: f64, theta_lower: Vec<f64>, theta_upper: Vec<f64>, a_opt: f64) -> Self {
        Self {
            lower,
            upper,
            exact: upper - lower <= EXACT_REL_TOL * upper,
            theta_lower,
            theta_upper,
            a_opt,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Settings for the θ search and the quadratures inside it.
#[derive(Debug, Clone, Copy)]
pub struct ThetaSearch {
    /// Nelder–Mead evaluation budget per start.
    pub max_evals: usize,
    /// Absolute tolerance for arc integrals (co-dimension 3).
    pub arc_tol: f64,
    /// Absolute tolerance for sphere integrals (co-dimension 4).
    pub sphere_tol: f64,
    /// Evaluation budget for the co-dimension 4 lower-bound search; 0
    /// evaluates only the candidate directions.
    pub sphere_search_evals: usize,
}

impl Default for ThetaSearch {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            arc_tol: 1e-10,
            sphere_tol: 1e-8,
            sphere_search_evals: 12,
        }
    }
}

// ---------------------------------------------------------------------------
// Planar angles

/// C_y for a planar angle (or a co-dimension 2 wedge) of half-angle α.
pub fn c2d(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < PI) {
        return Err(Error::domain(format!(
            "half-angle {alpha} outside (0, pi); a zero angle is an outward cusp, for which |Lambda| grows faster than gamma^2"
        )));
    }
    Ok(if alpha <= 0.5 * PI { alpha.sin().powi(-2) } else { 1.0 })
}

/// C_y at a smooth boundary point (also any cone containing a half-space).
pub fn smooth_constant() -> f64 {
    1.0
}

// ---------------------------------------------------------------------------
// σ and Σ

/// σ = √(1 + b⁻² + b′² b⁻⁴).
pub fn sigma_direct(b: f64, db: f64) -> f64 {
    (1.0 + b.powi(-2) + db * db * b.powi(-4)).sqrt()
}

/// Σ and its intermediates at one point of S^{j−2}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSample {
    pub b: f64,
    pub grad: Vec<f64>,
    /// ζ = b ∇b.
    pub zeta: Vec<f64>,
    /// Z = b² I + ∇b ⊗ ∇b, row-major.
    pub z: Vec<Vec<f64>>,
    /// Ψ = Z⁻¹ ζ.
    pub psi: Vec<f64>,
    pub sigma: f64,
}

/// Evaluates Σ = √(1 + ((b − Ψ·∇b)² + b²|Ψ|²)⁻¹) by a dense solve.
/// With a one-component gradient this is σ.
pub fn sigma_general(b: f64, grad: &[f64]) -> Result<SigmaSample> {
    sigma_sample(b, grad, 0)
}

fn sigma_sample(b: f64, grad: &[f64], sample: usize) -> Result<SigmaSample> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::domain(format!(
            "b must be positive and finite, got {b} at sample {sample}"
        )));
    }
    let n = grad.len();
    let g = DVector::from_column_slice(grad);
    let zeta = &g * b;
    let z = DMatrix::identity(n, n) * (b * b) + &g * g.transpose();
    let psi = z.clone().cholesky().ok_or(Error::SingularZ { sample })?.solve(&zeta);
    let denom = (b - psi.dot(&g)).powi(2) + b * b * psi.norm_squared();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::SingularZ { sample });
    }
    Ok(SigmaSample {
        b,
        grad: grad.to_vec(),
        zeta: zeta.as_slice().to_vec(),
        z: (0..n).map(|i| z.row(i).iter().copied().collect()).collect(),
        psi: psi.as_slice().to_vec(),
        sigma: (1.0 + 1.0 / denom).sqrt(),
    })
}

/// σ per straight edge of a 3-dimensional section: σ² = 1 + 1/d².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaArc {
    pub start: f64,
    pub end: f64,
    pub face: usize,
    pub distance: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaProfile {
    Arcs {
        arcs: Vec<SigmaArc>,
    },
    Samples {
        points: Vec<Vec<f64>>,
        samples: Vec<SigmaSample>,
    },
}

impl SigmaProfile {
    pub fn sup(&self) -> f64 {
        match self {
            SigmaProfile::Arcs { arcs } => arcs.iter().map(|a| a.sigma).fold(f64::NEG_INFINITY, f64::max),
            SigmaProfile::Samples { samples, .. } => samples.iter().map(|s| s.sigma).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn inf(&self) -> f64 {
        match self {
            SigmaProfile::Arcs { arcs } => arcs.iter().map(|a| a.sigma).fold(f64::INFINITY, f64::min),
            SigmaProfile::Samples { samples, .. } => samples.iter().map(|s| s.sigma).fold(f64::INFINITY, f64::min),
        }
    }
}

/// σ on each arc of a 3-dimensional section profile.
pub fn sigma_codim3(profile: &SectionProfile) -> SigmaProfile {
    SigmaProfile::Arcs {
        arcs: profile
            .arcs
            .iter()
            .map(|a| SigmaArc {
                start: a.start,
                end: a.end,
                face: a.face,
                distance: a.distance,
                sigma: (1.0 + a.distance.powi(-2)).sqrt(),
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Co-dimension 3

/// (∫ b²σ, ∫ b²) over S¹ by adaptive quadrature, arc by arc.
pub fn profile_moments(profile: &SectionProfile, tol: f64) -> Result<(f64, f64)> {
    let n = profile.arcs.len() as f64;
    let quad = Adaptive::with_abs_tol(tol / n);
    let mut num = 0.0;
    let mut den = 0.0;
    for arc in &profile.arcs {
        let s = (1.0 + arc.distance.powi(-2)).sqrt();
        let b2 = quad.integrate(|phi| arc.b(phi).powi(2), arc.start, arc.end)?;
        num += s * b2;
        den += b2;
    }
    Ok((num, den))
}

/// Same moments from the closed-form antiderivative d² tan(φ − φ_i).
pub fn profile_moments_exact(profile: &SectionProfile) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for arc in &profile.arcs {
        let b2 = arc.integral_b2();
        num += (1.0 + arc.distance.powi(-2)).sqrt() * b2;
        den += b2;
    }
    (num, den)
}

/// ∫b²σ / ∫b² at a fixed θ: the optimal decay rate a and √(lower bound).
pub fn profile_ratio(profile: &SectionProfile, tol: f64) -> Result<f64> {
    let (num, den) = profile_moments(profile, tol)?;
    Ok(num / den)
}

/// sup_φ σ² at a fixed θ.
pub fn profile_upper(profile: &SectionProfile) -> f64 {
    1.0 + profile.min_distance().powi(-2)
}

/// Two-sided bounds for a vertex of co-dimension 3.
pub fn bounds_codim3(cone: &PolyhedralCone, search: &ThetaSearch) -> Result<ConeBounds> {
    if cone.dim() != 3 {
        return Err(Error::domain(format!(
            "bounds_codim3 needs a cone in R^3, got R^{}",
            cone.dim()
        )));
    }
    // upper: the Chebyshev-centre direction minimizes sup σ² = 1 + 1/min d²
    let centred = max_min_distance_direction(cone)?;
    let theta_upper = centred.theta.to_vec();
    let upper_profile = section_profile(cone, &theta_upper)?;
    let upper = profile_upper(&upper_profile);

    // lower: maximize the ratio; the loop uses the exact arc integrals and
    // the reported value is re-evaluated by quadrature
    let ratio_exact = |theta: &DVector<f64>| -> f64 {
        match section_profile(cone, theta.as_slice()) {
            Ok(p) => {
                let (num, den) = profile_moments_exact(&p);
                num / den
            }
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let mut starts = vec![DVector::from_vec(theta_upper.clone())];
    starts.extend(cone.start_directions());
    let opts = NelderMeadOptions {
        max_evals: search.max_evals,
        x_tol: 1e-10,
        ..Default::default()
    };
    let (theta_lower, _) = maximize_on_sphere(ratio_exact, &starts, &opts)
        .ok_or_else(|| Error::OptimizationFailed("no admissible direction for the lower bound".into()))?;
    let lower_profile = section_profile(cone, theta_lower.as_slice())?;
    let mut a = profile_ratio(&lower_profile, search.arc_tol)?;
    let mut theta_lower = theta_lower.as_slice().to_vec();
    let a_centre = profile_ratio(&upper_profile, search.arc_tol)?;
    if a_centre > a {
        a = a_centre;
        theta_lower = theta_upper.clone();
    }
    Ok(ConeBounds::new(a * a, upper, theta_lower, theta_upper, a))
}

// ---------------------------------------------------------------------------
// Co-dimension 4: fields on S²

/// Section profile b on S^{j−2} ⊂ R^{j−1} together with its tangential
/// gradient (expressed in ambient coordinates).
pub trait SphereField: Sync {
    /// j − 1: the dimension of the space containing the sphere.
    fn ambient_dim(&self) -> usize;
    fn b(&self, phi: &[f64]) -> f64;
    fn grad(&self, phi: &[f64]) -> Vec<f64>;
    /// Azimuths in [0, 2π) at which the integrand may have kinks on the
    /// latitude circle of polar angle `polar` (see [`sphere_point`]).
    fn kinks(&self, _polar: f64) -> Vec<f64> {
        Vec::new()
    }
    /// Extra points where Σ should be sampled for the supremum.
    fn special_points(&self) -> Vec<Vec<f64>> {
        Vec::new()
    }
}

/// Point of S² at polar angle `polar` and azimuth `azimuth`; the pole is a
/// fixed generic direction so that symmetric cones do not put a vertex on it.
pub fn sphere_point(polar: f64, azimuth: f64) -> [f64; 3] {
    let (u, v, w) = sphere_frame();
    let (sp, cp) = polar.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    let p = u * (sp * ca) + v * (sp * sa) + w * cp;
    [p.x, p.y, p.z]
}

fn sphere_frame() -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let w = Vector3::new(0.2127, 0.4551, 0.8648).normalize();
    let u = Vector3::new(1.0, 0.0, 0.0);
    let u = (u - w * w.dot(&u)).normalize();
    let v = w.cross(&u);
    (u, v, w)
}

const SPHERE_PANELS: usize = 16;

/// ∫_{S²} f by nested adaptive Gauss–Legendre in spherical angles.
pub fn sphere_integral<F, K>(f: F, kinks: K, tol: f64) -> Result<f64>
where
    F: Fn(&[f64; 3]) -> f64,
    K: Fn(f64) -> Vec<f64>,
{
    let inner = Adaptive::with_abs_tol(tol / (4.0 * PI));
    let outer = Adaptive::with_abs_tol(tol);
    let failure = std::cell::RefCell::new(None);
    let polar_breaks: Vec<f64> = (1..SPHERE_PANELS / 2)
        .map(|k| PI * k as f64 / (SPHERE_PANELS / 2) as f64)
        .collect();
    let value = outer.integrate_split(
        |polar| {
            let s = polar.sin();
            if s == 0.0 {
                return 0.0;
            }
            // uniform pre-split so narrow features cannot slip between all nodes
            let mut breaks = kinks(polar);
            breaks.extend((1..SPHERE_PANELS).map(|k| TAU * k as f64 / SPHERE_PANELS as f64));
            match inner.integrate_split(|az| f(&sphere_point(polar, az)), 0.0, TAU, &breaks) {
                Ok(v) => s * v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        },
        0.0,
        PI,
        &polar_breaks,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => value,
    }
}

/// Azimuths where the latitude circle at `polar` meets the great circle
/// {p : p·n = 0} (none, or two).
pub fn great_circle_crossings(n: &Vector3<f64>, polar: f64) -> Vec<f64> {
    let (u, v, w) = sphere_frame();
    let (sp, cp) = polar.sin_cos();
    let (a, b, c) = (sp * n.dot(&u), sp * n.dot(&v), cp * n.dot(&w));
    let r = a.hypot(b);
    if r > 1e-300 && c.abs() <= r {
        let delta = b.atan2(a);
        let t = (-c / r).acos();
        vec![(delta + t).rem_euclid(TAU), (delta - t).rem_euclid(TAU)]
    } else {
        Vec::new()
    }
}

/// Deterministic near-uniform points on S² (Fibonacci lattice).
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * k as f64;
            [r * t.cos(), r * t.sin(), z]
        })
        .collect()
}

/// Checks the supplied gradient against central differences along two
/// tangent directions. Points where one-sided differences disagree (kinks)
/// are skipped; a failure at step h is retried at h/10 before reporting.
pub fn check_gradient(field: &dyn SphereField, points: &[[f64; 3]]) -> Result<()> {
    for (k, p) in points.iter().enumerate() {
        let pv = DVector::from_column_slice(p);
        let g = DVector::from_vec(field.grad(p));
        let b0 = field.b(p);
        for t in orthonormal_complement(&pv) {
            let move_to = |h: f64| -> f64 {
                let q = (&pv + &t * h).normalize();
                field.b(q.as_slice())
            };
            let expected = g.dot(&t);
            let scale = 1.0 + expected.abs();
            let mut worst = f64::INFINITY;
            let mut kink = false;
            for h in [1e-5, 1e-6] {
                let (fp, fm) = (move_to(h), move_to(-h));
                let fwd = (fp - b0) / h;
                let bwd = (b0 - fm) / h;
                if (fwd - bwd).abs() > 1e-3 * scale + 1e3 * h * scale {
                    kink = true;
                    break;
                }
                worst = worst.min(((fp - fm) / (2.0 * h) - expected).abs());
            }
            if !kink && worst > 1e-6 * scale {
                return Err(Error::InconsistentGradient {
                    sample: k,
                    discrepancy: worst,
                });
            }
        }
    }
    Ok(())
}

/// ∫ b^{j−1} Σ / ∫ b^{j−1} over S² and the sampled sup Σ², for j = 4.
pub fn field_moments(field: &dyn SphereField, tol: f64) -> Result<(f64, f64)> {
    if field.ambient_dim() != 3 {
        return Err(Error::domain(
            "sphere quadrature is implemented for S^2 (co-dimension 4) only",
        ));
    }
    let failure = std::sync::Mutex::new(None);
    let sigma_at = |p: &[f64; 3]| -> f64 {
        let b = field.b(p);
        match sigma_general(b, &field.grad(p)) {
            Ok(s) => s.sigma,
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let kinks = |polar: f64| field.kinks(polar);
    let den = sphere_integral(|p| field.b(p).powi(3), kinks, tol)?;
    let num = sphere_integral(|p| field.b(p).powi(3) * sigma_at(p), kinks, tol);
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok((num?, den))
}

/// Σ sampled on a Fibonacci lattice plus the field's special points.
pub fn sigma_samples(field: &dyn SphereField, n: usize) -> Result<SigmaProfile> {
    let mut points: Vec<Vec<f64>> = fibonacci_sphere(n).into_iter().map(|p| p.to_vec()).collect();
    points.extend(field.special_points());
    let samples = points
        .iter()
        .enumerate()
        .map(|(k, p)| sigma_sample(field.b(p), &field.grad(p), k))
        .collect::<Result<Vec<_>>>()?;
    Ok(SigmaProfile::Samples { points, samples })
}

/// Bounds at the single direction θ that the field was built for.
pub fn bounds_for_field(field: &dyn SphereField, theta: &[f64], search: &ThetaSearch) -> Result<ConeBounds> {
    let probe: Vec<[f64; 3]> = fibonacci_sphere(64);
    check_gradient(field, &probe)?;
    let (num, den) = field_moments(field, search.sphere_tol)?;
    let a = num / den;
    let sup = sigma_samples(field, 2000)?.sup();
    Ok(ConeBounds::new(a * a, sup * sup, theta.to_vec(), theta.to_vec(), a))
}

/// Section profile of a polyhedral cone in R⁴ on the sphere S² of the
/// hyperplane orthogonal to θ: b(φ) = min_{φ·f_i > 0} d_i / (φ·f_i).
#[derive(Debug, Clone)]
pub struct PolyhedralField {
    theta: DVector<f64>,
    feet: Vec<Vector3<f64>>,
    distances: Vec<f64>,
}

impl PolyhedralField {
    pub fn new(cone: &PolyhedralCone, theta: &[f64]) -> Result<Self> {
        if cone.dim() != 4 || theta.len() != 4 {
            return Err(Error::domain("polyhedral sphere field needs a cone in R^4"));
        }
        let th = DVector::from_column_slice(theta).normalize();
        for (i, n) in cone.normals().iter().enumerate() {
            let dot = n.dot(&th);
            if dot < ADMISSIBLE_TOL {
                return Err(Error::NotInterior { face: i, dot });
            }
        }
        let frame = orthonormal_complement(&th);
        let mut feet = Vec::new();
        let mut distances = Vec::new();
        for n in cone.normals() {
            let np = Vector3::new(frame[0].dot(n), frame[1].dot(n), frame[2].dot(n));
            let r = np.norm();
            if r < 1e-14 {
                continue;
            }
            feet.push(-np / r);
            distances.push(th.dot(n) / r);
        }
        let field = Self {
            theta: th,
            feet,
            distances,
        };
        // bounded section: every direction must see some face
        let starts: Vec<DVector<f64>> = fibonacci_sphere(12)
            .iter()
            .map(|p| DVector::from_column_slice(p))
            .collect();
        let worst = maximize_on_sphere(
            |phi| {
                let p = Vector3::new(phi[0], phi[1], phi[2]);
                -field.feet.iter().map(|f| f.dot(&p)).fold(f64::NEG_INFINITY, f64::max)
            },
            &starts,
            &NelderMeadOptions::default(),
        );
        if let Some((dir, v)) = worst {
            if v >= -1e-12 {
                return Err(Error::Unbounded {
                    phi: dir[0].atan2(dir[1]),
                });
            }
        }
        Ok(field)
    }

    pub fn theta(&self) -> &[f64] {
        self.theta.as_slice()
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    fn active(&self, p: &Vector3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, (f, d)) in self.feet.iter().zip(&self.distances).enumerate() {
            let c = f.dot(p);
            if c > 0.0 {
                let r = d / c;
                if r < best.1 {
                    best = (i, r);
                }
            }
        }
        best
    }
}

impl SphereField for PolyhedralField {
    fn ambient_dim(&self) -> usize {
        3
    }

    fn b(&self, phi: &[f64]) -> f64 {
        self.active(&Vector3::from_column_slice(phi)).1
    }

    fn grad(&self, phi: &[f64]) -> Vec<f64> {
        let p = Vector3::from_column_slice(phi);
        let (i, _) = self.active(&p);
        if i == usize::MAX {
            return vec![f64::NAN; 3];
        }
        let f = self.feet[i];
        let c = f.dot(&p);
        let g = -(f - p * c) * (self.distances[i] / (c * c));
        vec![g.x, g.y, g.z]
    }

    /// Face regions meet where d_k (φ·f_i) = d_i (φ·f_k): great circles.
    fn kinks(&self, polar: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..self.feet.len() {
            for k in i + 1..self.feet.len() {
                let n = self.feet[i] * self.distances[k] - self.feet[k] * self.distances[i];
                out.extend(great_circle_crossings(&n, polar));
            }
        }
        out
    }

    fn special_points(&self) -> Vec<Vec<f64>> {
        self.feet.iter().map(|f| vec![f.x, f.y, f.z]).collect()
    }
}

/// Two-sided bounds for a vertex of co-dimension 4.
pub fn bounds_codim_j(cone: &PolyhedralCone, search: &ThetaSearch) -> Result<ConeBounds> {
    if cone.dim() != 4 {
        return Err(Error::domain(format!(
            "co-dimension {} vertices are not supported (only 3 and 4)",
            cone.dim()
        )));
    }
    let (theta_c, t) = cone.chebyshev_direction()?;
    if !(t >= ADMISSIBLE_TOL) {
        return Err(Error::OptimizationFailed("no admissible direction found".into()));
    }
    let field_c = PolyhedralField::new(cone, theta_c.as_slice())?;
    let centre = bounds_for_field(&field_c, theta_c.as_slice(), search)?;

    let mut best_theta = theta_c.clone();
    let mut best_a = centre.a_opt;
    if search.sphere_search_evals > 0 {
        let coarse = ThetaSearch {
            sphere_tol: 1e-4,
            ..*search
        };
        let ratio = |theta: &DVector<f64>| -> f64 {
            PolyhedralField::new(cone, theta.as_slice())
                .and_then(|f| field_moments(&f, coarse.sphere_tol))
                .map(|(n, d)| n / d)
                .unwrap_or(f64::NEG_INFINITY)
        };
        let opts = NelderMeadOptions {
            initial_step: 0.05,
            max_evals: search.sphere_search_evals,
            ..Default::default()
        };
        if let Some((theta, _)) = maximize_on_sphere(ratio, std::slice::from_ref(&theta_c), &opts) {
            if (&theta - &theta_c).norm() > 1e-12 {
                let f = PolyhedralField::new(cone, theta.as_slice())?;
                let (n, d) = field_moments(&f, search.sphere_tol)?;
                if n / d > best_a {
                    best_a = n / d;
                    best_theta = theta;
                }
            }
        }
    }
    Ok(ConeBounds::new(
        best_a * best_a,
        centre.upper,
        best_theta.as_slice().to_vec(),
        theta_c.as_slice().to_vec(),
        best_a,
    ))
}

// ---------------------------------------------------------------------------
// Domain constant

/// C_y for one boundary point, with the bracket when only bounds are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerConstant {
    pub index: usize,
    pub label: String,
    pub weight: f64,
    /// Headline C_y (the bracket midpoint for vertices).
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<ConeBounds>,
    /// G(y)² C_y.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConstant {
    pub value: f64,
    pub argmax: usize,
    /// Half-width of the bracket at the attaining corner (0 when exact).
    pub uncertainty: f64,
    pub corners: Vec<CornerConstant>,
}

fn describe(kind: &CornerKind) -> String {
    match kind {
        CornerKind::SmoothPoint => "smooth point".into(),
        CornerKind::PlanarAngle { alpha } => format!("planar angle, half-angle {alpha:.6}"),
        CornerKind::Wedge { alpha, ambient_dim } => format!("wedge in R^{ambient_dim}, half-angle {alpha:.6}"),
        CornerKind::PolyhedralCone { cone } => format!("polyhedral cone in R^{}", cone.dim()),
        CornerKind::HalfSpaceContaining => "cone containing a half-space".into(),
        CornerKind::Cusp { p } => format!("cusp p = {p}"),
    }
}

/// C_y and, for vertices, the bracket it comes from.
pub fn corner_constant(desc: &CornerDescriptor, search: &ThetaSearch) -> Result<(f64, Option<ConeBounds>)> {
    desc.validate()?;
    match &desc.kind {
        CornerKind::SmoothPoint | CornerKind::HalfSpaceContaining => Ok((smooth_constant(), None)),
        CornerKind::PlanarAngle { alpha } | CornerKind::Wedge { alpha, .. } => Ok((c2d(*alpha)?, None)),
        CornerKind::PolyhedralCone { cone } => match cone.classify()? {
            ConeClass::HalfSpace => Ok((smooth_constant(), None)),
            ConeClass::Wedge { alpha } => Ok((c2d(alpha)?, None)),
            ConeClass::Vertex { codim, reduced } => {
                let b = match codim {
                    3 => bounds_codim3(&reduced, search)?,
                    4 => bounds_codim_j(&reduced, search)?,
                    _ => {
                        return Err(Error::domain(format!(
                            "co-dimension {codim} vertices are not supported (only 3 and 4)"
                        )))
                    }
                };
                let v = if b.exact { b.upper } else { b.midpoint() };
                Ok((v, Some(b)))
            }
        },
        CornerKind::Cusp { .. } => unreachable!("rejected by validate"),
    }
}

/// C = sup over points with G > 0 of G² C_y, and the first point attaining it.
pub fn domain_constant(corners: &[CornerDescriptor], search: &ThetaSearch) -> Result<DomainConstant> {
    for c in corners {
        c.validate()?;
    }
    if !corners.iter().any(|c| c.weight > 0.0) {
        return Err(Error::NoPositiveWeight);
    }
    let mut out = Vec::new();
    for (i, c) in corners.iter().enumerate() {
        if c.weight <= 0.0 {
            continue;
        }
        let (value, bounds) = corner_constant(c, search)?;
        out.push(CornerConstant {
            index: i,
            label: c.label.clone().unwrap_or_else(|| describe(&c.kind)),
            weight: c.weight,
            value,
            bounds,
            contribution: c.weight * c.weight * value,
        });
    }
    let mut best = 0;
    for (k, c) in out.iter().enumerate() {
        let b = out[best].contribution;
        // near-ties go to the earlier point so rescaling G cannot flip the answer
        if c.contribution > b * (1.0 + 1e-12) {
            best = k;
        }
    }
    let top = &out[best];
    Ok(DomainConstant {
        value: top.contribution,
        argmax: top.index,
        uncertainty: top
            .bounds
            .as_ref()
            .map_or(0.0, |b| 0.5 * b.width() * top.weight * top.weight),
        corners: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PlanarPolygon;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn planar_angle_constants() {
        assert_relative_eq!(c2d(PI / 4.0).unwrap(), 2.0, epsilon = 1e-14);
        assert_relative_eq!(c2d(PI / 2.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(c2d(3.0 * PI / 4.0).unwrap(), 1.0);
        assert!(c2d(0.0).is_err());
        assert!(c2d(PI).is_err());
        assert_eq!(smooth_constant(), 1.0);
    }

    #[test]
    fn sigma_constant_b() {
        let alpha: f64 = 0.3;
        assert_relative_eq!(sigma_direct(alpha.tan(), 0.0), 1.0 / alpha.sin(), epsilon = 1e-14);
        let s = sigma_general(2.0, &[0.0, 0.0]).unwrap();
        assert!(s.psi.iter().all(|&x| x == 0.0));
        assert_relative_eq!(s.sigma, (1.25f64).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn straight_edge_sigma_is_constant() {
        let d = 0.37;
        let phi0 = 0.4;
        for k in 0..100 {
            let phi = phi0 - 1.4 + 2.8 * k as f64 / 99.0;
            let c = (phi - phi0).cos();
            let b = d / c;
            let db = d * (phi - phi0).sin() / (c * c);
            assert_relative_eq!(sigma_direct(b, db), (1.0 + 1.0 / (d * d)).sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn octant_sigma_profile() {
        let cone = PolyhedralCone::orthant(3);
        let s = 1.0 / 3f64.sqrt();
        let p = section_profile(&cone, &[s, s, s]).unwrap();
        let sp = sigma_codim3(&p);
        assert_relative_eq!(sp.sup().powi(2), 3.0, epsilon = 1e-13);
        assert_relative_eq!(sp.inf().powi(2), 3.0, epsilon = 1e-13);
    }

    #[test]
    fn moments_match_closed_form() {
        let cone = PolyhedralCone::new(vec![
            vec![1.0, 0.0, 0.3],
            vec![0.0, 1.0, 0.1],
            vec![-1.0, 0.2, 0.9],
            vec![0.1, -1.0, 0.7],
        ])
        .unwrap();
        let p = section_profile(&cone, &[0.1, 0.05, 1.0]).unwrap();
        let (n1, d1) = profile_moments(&p, 1e-12).unwrap();
        let (n2, d2) = profile_moments_exact(&p);
        assert_relative_eq!(n1, n2, max_relative = 1e-11);
        assert_relative_eq!(d1, d2, max_relative = 1e-11);
    }

    #[test]
    fn octant_bounds() {
        let b = bounds_codim3(&PolyhedralCone::orthant(3), &ThetaSearch::default()).unwrap();
        assert!(b.exact);
        assert_relative_eq!(b.lower, 3.0, epsilon = 1e-9);
        assert_relative_eq!(b.upper, 3.0, epsilon = 1e-9);
        assert_relative_eq!(b.a_opt, 3f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn bounds_bracket_for_rectangle_section() {
        let v = |x: f64, y: f64| {
            let n = (x * x + y * y + 1.0).sqrt();
            [x / n, y / n, 1.0 / n]
        };
        let cone =
            PolyhedralCone::over_spherical_polygon(&[v(-0.9, -0.2), v(0.9, -0.2), v(0.9, 0.2), v(-0.9, 0.2)]).unwrap();
        let b = bounds_codim3(&cone, &ThetaSearch::default()).unwrap();
        assert!(b.lower >= 1.0);
        assert!(b.lower <= b.upper + 1e-9);
        assert!(!b.exact);
    }

    #[test]
    fn j_reduction_matches_sigma() {
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let b = 0.05 + 5.0 * next();
            let db = 10.0 * (next() - 0.5);
            let s = sigma_general(b, &[db]).unwrap();
            assert_relative_eq!(s.sigma, sigma_direct(b, db), max_relative = 1e-12);
        }
    }

    #[test]
    fn constant_field_bounds() {
        struct Constant(f64);
        impl SphereField for Constant {
            fn ambient_dim(&self) -> usize {
                3
            }
            fn b(&self, _: &[f64]) -> f64 {
                self.0
            }
            fn grad(&self, _: &[f64]) -> Vec<f64> {
                vec![0.0; 3]
            }
        }
        let b = bounds_for_field(&Constant(0.8), &[0.0, 0.0, 0.0, 1.0], &ThetaSearch::default()).unwrap();
        let expect = 1.0 + 1.0 / 0.64;
        assert_relative_eq!(b.lower, expect, max_relative = 1e-9);
        assert_relative_eq!(b.upper, expect, max_relative = 1e-12);
        assert!(b.exact);
    }

    #[test]
    fn inconsistent_gradient_detected() {
        struct Bad;
        impl SphereField for Bad {
            fn ambient_dim(&self) -> usize {
                3
            }
            fn b(&self, p: &[f64]) -> f64 {
                2.0 + p[0]
            }
            fn grad(&self, _: &[f64]) -> Vec<f64> {
                vec![0.0; 3]
            }
        }
        let r = bounds_for_field(&Bad, &[0.0, 0.0, 0.0, 1.0], &ThetaSearch::default());
        assert!(matches!(r, Err(Error::InconsistentGradient { .. })));
    }

    #[test]
    fn four_orthant_field_gradient_and_sigma() {
        let cone = PolyhedralCone::orthant(4);
        let f = PolyhedralField::new(&cone, &[0.5; 4]).unwrap();
        for d in f.distances() {
            assert_relative_eq!(*d, 1.0 / 3f64.sqrt(), epsilon = 1e-14);
        }
        check_gradient(&f, &fibonacci_sphere(200)).unwrap();
        let s = sigma_samples(&f, 500).unwrap();
        assert_relative_eq!(s.sup(), 2.0, max_relative = 1e-10);
        assert_relative_eq!(s.inf(), 2.0, max_relative = 1e-10);
    }

    #[test]
    fn four_orthant_bounds() {
        // exp(−x₁−x₂−x₃−x₄) is an eigenfunction with eigenvalue −4
        let search = ThetaSearch {
            sphere_search_evals: 0,
            ..Default::default()
        };
        let b = bounds_codim_j(&PolyhedralCone::orthant(4), &search).unwrap();
        assert!((b.lower - 4.0).abs() < 1e-6 && (b.upper - 4.0).abs() < 1e-6, "{b:?}");
        assert!(b.exact);
        for x in &b.theta_upper {
            assert!((x - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn sphere_integral_of_one_and_cap() {
        let v = sphere_integral(|_| 1.0, |_| Vec::new(), 1e-10).unwrap();
        assert_relative_eq!(v, 4.0 * PI, max_relative = 1e-12);
        // ∫ max(0, z) = π, kinked along the equator
        let e3 = Vector3::new(0.0, 0.0, 1.0);
        let v = sphere_integral(|p| p[2].max(0.0), |t| great_circle_crossings(&e3, t), 1e-10).unwrap();
        assert_relative_eq!(v, PI, max_relative = 1e-10);
        // without the kink hint narrow caps near tangency cost accuracy
        let v = sphere_integral(|p| p[2].max(0.0), |_| Vec::new(), 1e-10).unwrap();
        assert_relative_eq!(v, PI, max_relative = 1e-7);
    }

    #[test]
    fn wedge_via_cone_matches_planar_formula() {
        for alpha in [0.3, PI / 4.0, 1.2, 0.5 * PI] {
            let d = CornerDescriptor::new(
                CornerKind::PolyhedralCone {
                    cone: PolyhedralCone::wedge(alpha).unwrap(),
                },
                1.0,
            );
            let (v, b) = corner_constant(&d, &ThetaSearch::default()).unwrap();
            assert!(b.is_none());
            assert_relative_eq!(v, c2d(alpha).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn nested_sections_upper_bound_monotone() {
        let base = vec![
            vec![1.0, 0.0, 0.5],
            vec![0.0, 1.0, 0.5],
            vec![-1.0, 0.0, 0.5],
            vec![0.0, -1.0, 0.5],
        ];
        let mut cut = base.clone();
        cut.push(vec![0.5, 0.5, 0.6]);
        let big = PolyhedralCone::new(base).unwrap();
        let small = PolyhedralCone::new(cut).unwrap();
        for th in [[0.0, 0.0, 1.0], [-0.1, -0.05, 1.0], [-0.2, 0.1, 1.0]] {
            let ub = profile_upper(&section_profile(&big, &th).unwrap());
            let us = profile_upper(&section_profile(&small, &th).unwrap());
            assert!(us >= ub - 1e-12);
        }
    }

    #[test]
    fn polygon_domain_constants() {
        let s = ThetaSearch::default();
        let sq = domain_constant(&PlanarPolygon::unit_square().corners(), &s).unwrap();
        assert_relative_eq!(sq.value, 2.0, epsilon = 1e-12);
        let l = domain_constant(&PlanarPolygon::l_shape().corners(), &s).unwrap();
        assert_relative_eq!(l.value, 2.0, epsilon = 1e-12);
        let g = PlanarPolygon::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            Some(vec![2.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        let c = domain_constant(&g.corners(), &s).unwrap();
        assert_relative_eq!(c.value, 4.0, epsilon = 1e-12);
        assert_eq!(
            c.corners[c.corners.iter().position(|x| x.index == c.argmax).unwrap()].label,
            "edge 0"
        );
    }

    #[test]
    fn weights_validated() {
        let s = ThetaSearch::default();
        let zero = vec![CornerDescriptor::new(CornerKind::SmoothPoint, 0.0)];
        assert_eq!(domain_constant(&zero, &s).unwrap_err(), Error::NoPositiveWeight);
        let cusp = vec![CornerDescriptor::new(CornerKind::Cusp { p: 1.5 }, 1.0)];
        assert!(domain_constant(&cusp, &s).unwrap_err().is_validation());
    }

    #[test]
    fn bounds_json_fields() {
        let b = ConeBounds::new(3.0, 3.0, vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], 3f64.sqrt());
        let v: serde_json::Value = serde_json::to_value(&b).unwrap();
        for key in ["lower", "upper", "exact", "theta_lower", "theta_upper", "a_opt"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sigma_at_least_one(b in 1e-3f64..1e3, g1 in -1e3f64..1e3, g2 in -1e3f64..1e3) {
            let s = sigma_general(b, &[g1, g2]).unwrap();
            prop_assert!(s.sigma >= 1.0);
        }

        #[test]
        fn argmax_invariant_under_weight_scaling(
            alphas in proptest::collection::vec(0.1f64..3.0, 1..6),
            weights in proptest::collection::vec(0.1f64..3.0, 6),
            scale in 0.01f64..100.0,
        ) {
            let s = ThetaSearch::default();
            let corners: Vec<CornerDescriptor> = alphas
                .iter()
                .zip(&weights)
                .map(|(&a, &w)| CornerDescriptor::new(CornerKind::PlanarAngle { alpha: a }, w))
                .collect();
            let scaled: Vec<CornerDescriptor> = corners
                .iter()
                .map(|c| CornerDescriptor { weight: c.weight * scale, ..c.clone() })
                .collect();
            let a = domain_constant(&corners, &s).unwrap();
            let b = domain_constant(&scaled, &s).unwrap();
            prop_assert_eq!(a.argmax, b.argmax);
            prop_assert!((b.value - scale * scale * a.value).abs() <= 1e-10 * b.value);
        }

        #[test]
        fn cone_bounds_ordered(
            x in -0.3f64..0.3, y in -0.3f64..0.3, tilt in 0.2f64..1.0, extra in 0.0f64..0.5,
        ) {
            let cone = PolyhedralCone::new(vec![
                vec![1.0, 0.0, tilt],
                vec![0.0, 1.0, tilt + extra],
                vec![-1.0, 0.0, tilt],
                vec![x, -1.0, tilt + y.abs()],
            ]).unwrap();
            let b = bounds_codim3(&cone, &ThetaSearch { max_evals: 400, ..Default::default() }).unwrap();
            prop_assert!(b.lower >= 1.0);
            prop_assert!(b.lower <= b.upper + 1e-9);
        }
    }
}
