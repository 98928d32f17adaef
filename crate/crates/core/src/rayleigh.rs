//! The Rayleigh quotient
//!
//! ```text
//! J(v; γ, G) = (∫_Ω |∇v|² − γ ∫_Γ G v²) / ∫_Ω v²
//! ```
//!
//! for explicit trial functions. Every value is an upper bound for Λ.

use crate::corner_constants::profile_moments;
use crate::error::{Error, Result};
use crate::geometry::SectionProfile;
use crate::model_solvers::ModelDomain;
use crate::quadrature::{integrate_decaying, Adaptive, GaussLegendre};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Smooth even cutoff: 1 on [−1/2, 1/2], 0 outside [−1, 1], with the
/// quintic smoothstep 6s⁵ − 15s⁴ + 10s³ in between (s = 2(1 − |t|)).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cutoff;

impl Cutoff {
    pub fn psi(&self, t: f64) -> f64 {
        let a = t.abs();
        if a <= 0.5 {
            1.0
        } else if a >= 1.0 {
            0.0
        } else {
            let s = 2.0 * (1.0 - a);
            s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
        }
    }

    pub fn dpsi(&self, t: f64) -> f64 {
        let a = t.abs();
        if a <= 0.5 || a >= 1.0 {
            0.0
        } else {
            let s = 2.0 * (1.0 - a);
            -t.signum() * 2.0 * 30.0 * s * s * (1.0 - s) * (1.0 - s)
        }
    }

    /// ∫_{−1}^{1} ψ² = 1 + ∫_0^1 S² = 643/462.
    pub fn int_psi2(&self) -> f64 {
        643.0 / 462.0
    }

    /// ∫_{−1}^{1} ψ′² = 4 ∫_0^1 S′² = 40/7.
    pub fn int_dpsi2(&self) -> f64 {
        40.0 / 7.0
    }
}

/// The explicit trial functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    /// exp(−aξ) on a 3-dimensional cone, ξ the coordinate along θ; γ = 1.
    ConeExp { a: f64, profile: SectionProfile },
    /// e^{−γy} χ_τ(xγ − τ) on the half-plane y > 0.
    StripChi { tau: f64, gamma: f64 },
    /// exp(−γ x^{2−p}) on the cusp |y| < x^p.
    CuspExp { p: f64, gamma: f64 },
    /// exp(−a x) on the half-line with parameter γ.
    HalflineExp { rate: f64, gamma: f64 },
}

impl TestFunction {
    pub fn quotient(&self) -> Result<f64> {
        match self {
            TestFunction::ConeExp { a, profile } => closed_form_cone_quotient(*a, profile),
            TestFunction::StripChi { tau, gamma } => strip_chi_quotient(*tau, *gamma, &Cutoff),
            TestFunction::CuspExp { p, gamma } => cusp_quotient(*p, *gamma),
            TestFunction::HalflineExp { rate, gamma } => {
                if !(*rate > 0.0) {
                    return Err(Error::domain("decay rate must be positive"));
                }
                Ok(rate * rate - 2.0 * rate * gamma)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Cones

/// J(exp(−aξ); 1) = a² − 2a ∫b²σ / ∫b² on a 3-dimensional cone.
pub fn closed_form_cone_quotient(a: f64, profile: &SectionProfile) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::domain(format!("decay rate a must be positive, got {a}")));
    }
    let (num, den) = profile_moments(profile, 1e-10)?;
    Ok(a * a - 2.0 * a * num / den)
}

// ---------------------------------------------------------------------------
// Strip

/// J(v_τ; γ) = γ²(−1 + ∫ψ′² / (∫ψ² + 2(τ − 1))).
pub fn strip_chi_quotient(tau: f64, gamma: f64, psi: &Cutoff) -> Result<f64> {
    if !(tau > 1.0) {
        return Err(Error::domain(format!("tau must exceed 1, got {tau}")));
    }
    Ok(gamma * gamma * (-1.0 + psi.int_dpsi2() / (psi.int_psi2() + 2.0 * (tau - 1.0))))
}

/// χ_τ and its derivative.
fn chi(tau: f64, psi: &Cutoff, s: f64) -> (f64, f64) {
    let a = s.abs();
    if a < tau - 1.0 {
        (1.0, 0.0)
    } else if a < tau {
        let t = a - (tau - 1.0);
        (psi.psi(t), s.signum() * psi.dpsi(t))
    } else {
        (0.0, 0.0)
    }
}

/// The same quotient by direct 2D quadrature of the three integrals over
/// the half-plane {y > 0} (x ∈ [0, 2τ/γ] carries the support).
pub fn strip_chi_quotient_quadrature(tau: f64, gamma: f64, psi: &Cutoff) -> Result<f64> {
    if !(tau > 1.0) || !(gamma > 0.0) {
        return Err(Error::domain("need tau > 1 and gamma > 0"));
    }
    let quad = Adaptive::with_abs_tol(1e-13);
    let v = |x: f64, y: f64| -> (f64, f64, f64) {
        let (c, dc) = chi(tau, psi, x * gamma - tau);
        let e = (-gamma * y).exp();
        (c * e, gamma * dc * e, -gamma * c * e)
    };
    // kinks of χ_τ(xγ − τ): |xγ − τ| ∈ {τ − 1, τ − 1/2}
    let breaks: Vec<f64> = [tau - 1.0, tau - 0.5]
        .iter()
        .flat_map(|r| [(tau - r) / gamma, (tau + r) / gamma])
        .collect();
    let x_max = 2.0 * tau / gamma;
    let inner = |x: f64, which: usize| -> Result<f64> {
        integrate_decaying(
            |y| {
                let (val, vx, vy) = v(x, y);
                match which {
                    0 => val * val,
                    _ => vx * vx + vy * vy,
                }
            },
            0.0,
            1.0 / gamma,
            &quad,
        )
        .map(|r| r.0)
    };
    let area = |which: usize| -> Result<f64> {
        let failure = std::cell::RefCell::new(None);
        let r = Adaptive::with_abs_tol(1e-12).integrate_split(
            |x| match inner(x, which) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            x_max,
            &breaks,
        );
        match failure.into_inner() {
            Some(e) => Err(e),
            None => r,
        }
    };
    let mass = area(0)?;
    let energy = area(1)?;
    let boundary = Adaptive::with_abs_tol(1e-13).integrate_split(|x| v(x, 0.0).0.powi(2), 0.0, x_max, &breaks)?;
    Ok((energy - gamma * boundary) / mass)
}

// ---------------------------------------------------------------------------
// Cusp

/// J(exp(−γ x^q); γ, 1) on Υ_p = {x > 0, |y| < x^p}, q = 2 − p.
///
/// With e = exp(−2γx^q):
/// `J = (γ²q² ∫ x^{p+2q−2} e − γ ∫ e √(1 + p² x^{2p−2})) / ∫ x^p e`,
/// each integral evaluated in the variable t = 2γx^q.
pub fn cusp_quotient(p: f64, gamma: f64) -> Result<f64> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::domain(format!("cusp scan needs 1 < p < 2, got {p}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::domain("gamma must be positive"));
    }
    let q = 2.0 - p;
    let c = 2.0 * gamma;
    // x^k dx = (1/q) c^{−(k+1)/q} t^{(k+1)/q − 1} dt; the common 1/q cancels
    // and the powers of c are applied after integrating in t
    let quad = Adaptive {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        ..Adaptive::default()
    };
    let integrate = |f: &dyn Fn(f64) -> f64| -> Result<f64> {
        // geometric panels towards 0 tame the weak t^ε singularities
        let breaks: Vec<f64> = (1..60).map(|k| 0.5f64.powi(k)).collect();
        let head = quad.integrate_split(|t| f(t) * (-t).exp(), 0.0, 1.0, &breaks)?;
        let (tail, _) = integrate_decaying(|t| f(t) * (-t).exp(), 1.0, 1.0, &quad)?;
        Ok(head + tail)
    };
    let mass = integrate(&|t| t.powf((p + 1.0) / q - 1.0))?;
    let grad = integrate(&|t| t.powf((p + 2.0 * q - 1.0) / q - 1.0))?;
    let arc = integrate(&|t| t.powf(1.0 / q - 1.0) * (1.0 + p * p * (t / c).powf((2.0 * p - 2.0) / q)).sqrt())?;
    let grad_scale = c.powf((2.0 - 2.0 * q) / q);
    let arc_scale = c.powf(p / q);
    Ok((gamma * gamma * q * q * grad * grad_scale - gamma * arc * arc_scale) / mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuspPoint {
    pub gamma: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub log_gamma: f64,
    #[serde(rename = "log_negJ")]
    pub log_neg_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuspScan {
    pub p: f64,
    pub points: Vec<CuspPoint>,
    /// Least-squares slope of log(−J) against log γ.
    pub slope: f64,
    pub intercept: f64,
    /// 2/(2 − p).
    pub predicted: f64,
}

/// Evaluates the cusp quotient on a γ grid and fits the growth exponent.
pub fn cusp_scan(p: f64, gammas: &[f64]) -> Result<CuspScan> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::domain(format!(
            "cusp scan needs 1 < p < 2 (p >= 2 has unbounded order: |Lambda| beats any power of gamma), got {p}"
        )));
    }
    if gammas.len() < 5 {
        return Err(Error::domain("cusp scan needs at least 5 gamma values"));
    }
    if gammas.windows(2).any(|w| !(w[1] > w[0])) || !(gammas[0] >= 5.0) {
        return Err(Error::domain("gamma values must be increasing and at least 5"));
    }
    let values: Vec<Result<f64>> = gammas.par_iter().map(|&g| cusp_quotient(p, g)).collect();
    let mut points = Vec::with_capacity(gammas.len());
    for (&gamma, j) in gammas.iter().zip(values) {
        let j = j?;
        if !(j < 0.0) {
            return Err(Error::NonNegativeQuotient { gamma, value: j });
        }
        points.push(CuspPoint {
            gamma,
            j,
            log_gamma: gamma.ln(),
            log_neg_j: (-j).ln(),
        });
    }
    let (slope, intercept) = least_squares(
        &points.iter().map(|p| p.log_gamma).collect::<Vec<_>>(),
        &points.iter().map(|p| p.log_neg_j).collect::<Vec<_>>(),
    );
    Ok(CuspScan {
        p,
        points,
        slope,
        intercept,
        predicted: 2.0 / (2.0 - p),
    })
}

/// Ordinary least-squares line y = slope·x + intercept.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

// ---------------------------------------------------------------------------
// Half-line inequality

/// Piecewise cubic Hermite function on [x_0, x_n], zero beyond x_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicHermite {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl CubicHermite {
    /// Knots must start at 0 and increase; the function and its slope must
    /// vanish at the last knot so the extension by zero is H¹.
    pub fn new(knots: Vec<f64>, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || values.len() != knots.len() || slopes.len() != knots.len() {
            return Err(Error::domain("need at least two knots with matching values and slopes"));
        }
        if knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("knots must start at 0 and increase strictly"));
        }
        if *values.last().unwrap() != 0.0 {
            return Err(Error::domain("function must vanish at the last knot"));
        }
        Ok(Self { knots, values, slopes })
    }

    fn segment(&self, k: usize, t: f64) -> (f64, f64) {
        let h = self.knots[k + 1] - self.knots[k];
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let (t2, t3) = (t * t, t * t * t);
        let v =
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
        let dv = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        (v, dv)
    }

    /// (∫v′², ∫v²), exact: a 4-point Gauss rule integrates degree 7.
    pub fn moments(&self) -> (f64, f64) {
        let rule = GaussLegendre::new(4);
        let mut e = 0.0;
        let mut m = 0.0;
        for k in 0..self.knots.len() - 1 {
            let h = self.knots[k + 1] - self.knots[k];
            e += h * rule.integrate(0.0, 1.0, |t| self.segment(k, t).1.powi(2));
            m += h * rule.integrate(0.0, 1.0, |t| self.segment(k, t).0.powi(2));
        }
        (e, m)
    }

    pub fn value_at_zero(&self) -> f64 {
        self.values[0]
    }
}

/// Trial functions for the half-line inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HalflineFunction {
    Exp { rate: f64 },
    Spline(CubicHermite),
}

/// ∫v′² − γ v(0)² + γ² ∫v², which is ≥ 0 for every admissible v.
pub fn halfline_inequality_check(v: &HalflineFunction, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::domain("gamma must be positive"));
    }
    let (energy, mass, v0) = match v {
        HalflineFunction::Exp { rate } => {
            if !(*rate > 0.0) {
                return Err(Error::domain("decay rate must be positive"));
            }
            let quad = Adaptive::with_abs_tol(1e-14);
            let (m, _) = integrate_decaying(|x| (-2.0 * rate * x).exp(), 0.0, 1.0 / rate, &quad)?;
            (rate * rate * m, m, 1.0)
        }
        HalflineFunction::Spline(s) => {
            let (e, m) = s.moments();
            (e, m, s.value_at_zero())
        }
    };
    Ok(energy - gamma * v0 * v0 + gamma * gamma * mass)
}

// ---------------------------------------------------------------------------
// Trial quotients for the model domains

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialQuotient {
    pub label: String,
    pub value: f64,
}

fn cosh_quotient(a: f64, l: f64, gamma: f64) -> f64 {
    // v = cosh(a x) on (−l, l)
    let s = if a == 0.0 { l } else { (2.0 * a * l).sinh() / (2.0 * a) };
    (a * a * (s - l) - 2.0 * gamma * (a * l).cosh().powi(2)) / (s + l)
}

/// Quotients of explicit trial functions on a model domain: families of
/// decay rates around the optimal one (which is included). Each value is
/// an upper bound for Λ(domain; γ).
pub fn model_trial_quotients(domain: &ModelDomain, gamma: f64) -> Result<Vec<TrialQuotient>> {
    domain.validate()?;
    if !(gamma > 0.0) {
        return Err(Error::domain("gamma must be positive"));
    }
    let factors = [0.25, 0.5, 0.9, 1.0, 1.1, 2.0, 4.0];
    let mut out = Vec::new();
    match domain {
        ModelDomain::HalfLine => {
            for f in factors {
                let a = f * gamma;
                out.push(TrialQuotient {
                    label: format!("exp(-{a}x)"),
                    value: TestFunction::HalflineExp { rate: a, gamma }.quotient()?,
                });
            }
        }
        ModelDomain::PlanarAngle { alpha } if *alpha < 0.5 * PI => {
            for f in factors {
                let a = f * gamma / alpha.sin();
                out.push(TrialQuotient {
                    label: format!("exp(-{a}x)"),
                    value: a * a - 2.0 * gamma * a / alpha.sin(),
                });
            }
        }
        ModelDomain::PlanarAngle { .. } | ModelDomain::ConeWithHalfSpace => {
            // a wide angle or a cone with a half-space contains a half-plane
            for tau in [1.5, 10.0, 100.0, 1000.0] {
                out.push(TrialQuotient {
                    label: format!("strip chi, tau = {tau}"),
                    value: strip_chi_quotient(tau, gamma, &Cutoff)?,
                });
            }
        }
        ModelDomain::Parallelepiped { half_sides } => {
            let optimal: Vec<f64> = half_sides
                .iter()
                .map(|&l| Ok(crate::special_functions::mu_tanh_root(gamma * l)?.root / l))
                .collect::<Result<_>>()?;
            for f in factors {
                let value = half_sides
                    .iter()
                    .zip(&optimal)
                    .map(|(&l, &a)| cosh_quotient(f * a, l, gamma))
                    .sum();
                out.push(TrialQuotient {
                    label: format!("prod cosh({f} a_j x_j)"),
                    value,
                });
            }
        }
        ModelDomain::Ball { m } => {
            // constant: −γ|∂B|/|B| = −mγ
            out.push(TrialQuotient {
                label: "constant".into(),
                value: -(*m as f64) * gamma,
            });
            // radial exp(a r), r^{m−1} dr measure
            let quad = Adaptive::with_abs_tol(1e-13);
            let dim = *m as i32;
            for f in factors {
                let a = f * gamma;
                let mass = quad.integrate(|r| (2.0 * a * (r - 1.0)).exp() * r.powi(dim - 1), 0.0, 1.0)?;
                out.push(TrialQuotient {
                    label: format!("exp({a} r)"),
                    value: a * a - gamma / mass,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{section_profile, PolyhedralCone};
    use crate::model_solvers::model_lambda;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn cutoff_integrals() {
        let c = Cutoff;
        let q = Adaptive::with_abs_tol(1e-14);
        let brk = [-0.5, 0.5];
        let p2 = q.integrate_split(|t| c.psi(t).powi(2), -1.0, 1.0, &brk).unwrap();
        let d2 = q.integrate_split(|t| c.dpsi(t).powi(2), -1.0, 1.0, &brk).unwrap();
        assert_relative_eq!(p2, c.int_psi2(), max_relative = 1e-13);
        assert_relative_eq!(d2, c.int_dpsi2(), max_relative = 1e-13);
        assert_relative_eq!(c.psi(0.75), 0.5, epsilon = 1e-15);
        // derivative matches a central difference
        for t in [-0.9, -0.6, 0.55, 0.8] {
            let fd = (c.psi(t + 1e-6) - c.psi(t - 1e-6)) / 2e-6;
            assert_relative_eq!(c.dpsi(t), fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn cone_quotient_octant() {
        let s = 1.0 / 3f64.sqrt();
        let p = section_profile(&PolyhedralCone::orthant(3), &[s, s, s]).unwrap();
        assert_relative_eq!(
            closed_form_cone_quotient(3f64.sqrt(), &p).unwrap(),
            -3.0,
            epsilon = 1e-10
        );
        // a² − 2aR is minimized at a = R with value −R²
        let r = crate::corner_constants::profile_ratio(&p, 1e-12).unwrap();
        for a in [0.5 * r, 0.9 * r, 1.1 * r, 2.0 * r] {
            assert!(closed_form_cone_quotient(a, &p).unwrap() > -r * r);
        }
    }

    #[test]
    fn cone_quotient_minimum_is_lower_bound() {
        use crate::corner_constants::{bounds_codim3, ThetaSearch};
        let cone = PolyhedralCone::new(vec![
            vec![1.0, 0.0, 0.2],
            vec![0.0, 1.0, 0.4],
            vec![-0.7, -0.6, 1.0],
            vec![0.3, -0.9, 1.2],
        ])
        .unwrap();
        let b = bounds_codim3(&cone, &ThetaSearch::default()).unwrap();
        let profile = section_profile(&cone, &b.theta_lower).unwrap();
        let j = closed_form_cone_quotient(b.a_opt, &profile).unwrap();
        assert_relative_eq!(j, -b.lower, max_relative = 1e-9);
    }

    #[test]
    fn strip_closed_form_values() {
        let c = Cutoff;
        let j = strip_chi_quotient(101.0, 1.0, &c).unwrap();
        assert_relative_eq!(j, -1.0 + c.int_dpsi2() / (c.int_psi2() + 200.0), epsilon = 1e-15);
        // |J + γ²| ≤ γ² K/(τ − 1), K = ∫ψ′²/2
        for tau in [2.0, 10.0, 100.0, 1000.0] {
            for gamma in [0.5, 3.0] {
                let j = strip_chi_quotient(tau, gamma, &c).unwrap();
                assert!((j + gamma * gamma).abs() <= gamma * gamma * 0.5 * c.int_dpsi2() / (tau - 1.0));
            }
        }
        assert!(strip_chi_quotient(1.0, 1.0, &c).is_err());
    }

    #[test]
    fn strip_quadrature_matches_closed_form() {
        for (tau, gamma) in [(3.0, 1.0), (10.0, 2.5)] {
            let q = strip_chi_quotient_quadrature(tau, gamma, &Cutoff).unwrap();
            let c = strip_chi_quotient(tau, gamma, &Cutoff).unwrap();
            assert_relative_eq!(q, c, max_relative = 1e-8);
        }
    }

    #[test]
    fn cusp_quotient_matches_gamma_function_form() {
        // the two power integrals have closed forms Γ((k+1)/q)/(q c^{(k+1)/q})
        let (p, gamma): (f64, f64) = (1.5, 7.0);
        let q = 2.0 - p;
        let c = 2.0 * gamma;
        let moment = |k: f64| gamma_fn((k + 1.0) / q) / (q * c.powf((k + 1.0) / q));
        let arc = Adaptive::with_abs_tol(1e-12)
            .integrate_split(
                |x: f64| (-c * x.powf(q)).exp() * (1.0 + p * p * x.powf(2.0 * p - 2.0)).sqrt(),
                0.0,
                40.0,
                &[1e-6, 1e-4, 1e-2, 0.1, 1.0, 5.0],
            )
            .unwrap();
        let expect = (gamma * gamma * q * q * moment(q) - gamma * arc) / moment(p);
        assert_relative_eq!(cusp_quotient(p, gamma).unwrap(), expect, max_relative = 1e-9);
    }

    fn gamma_fn(x: f64) -> f64 {
        // Lanczos, g = 7
        const C: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        let x = x - 1.0;
        let mut a = C[0];
        let t = x + 7.5;
        for (i, c) in C.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }

    #[test]
    fn cusp_scan_exponent() {
        let gammas: Vec<f64> = (0..10).map(|k| 10.0 * 10f64.powf(k as f64 / 9.0)).collect();
        let s = cusp_scan(1.5, &gammas).unwrap();
        assert!((s.slope - 4.0).abs() < 0.2, "slope {}", s.slope);
        assert!(s.points.iter().all(|p| p.j < 0.0));
        assert!(cusp_scan(2.0, &gammas).is_err());
        assert!(cusp_scan(1.5, &gammas[..3]).is_err());
        assert!(cusp_scan(1.5, &[1.0, 2.0, 3.0, 4.0, 5.0]).is_err());
    }

    #[test]
    fn cusp_scan_steep_and_near_smooth() {
        let gammas: Vec<f64> = (0..10).map(|k| 10.0 * 10f64.powf(k as f64 / 9.0)).collect();
        let steep = cusp_scan(1.9, &gammas).unwrap();
        assert!((steep.slope - 20.0).abs() < 2.0, "slope {}", steep.slope);
        let near = cusp_scan(1.02, &gammas).unwrap();
        assert!((near.slope - 2.0).abs() < 0.15, "slope {}", near.slope);
        assert!(near.points.iter().all(|p| p.j < 0.0));
    }

    #[test]
    fn halfline_equality_and_bump() {
        let m = halfline_inequality_check(&HalflineFunction::Exp { rate: 2.0 }, 2.0).unwrap();
        assert!(m.abs() < 1e-12, "{m}");
        let bump = CubicHermite::new(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![0.0, 1.0, 0.5, 0.0],
            vec![0.0, 0.0, -1.0, 0.0],
        )
        .unwrap();
        let (e, mass) = bump.moments();
        let g = 1.5;
        let margin = halfline_inequality_check(&HalflineFunction::Spline(bump), g).unwrap();
        assert_relative_eq!(margin, e + g * g * mass, max_relative = 1e-14);
        assert!(margin > 0.0);
    }

    #[test]
    fn spline_moments_exact() {
        // v = (1 − x)² on [0, 1] is cubic Hermite with slopes −2, 0
        let s = CubicHermite::new(vec![0.0, 1.0], vec![1.0, 0.0], vec![-2.0, 0.0]).unwrap();
        let (e, m) = s.moments();
        assert_relative_eq!(e, 4.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(m, 0.2, epsilon = 1e-14);
    }

    #[test]
    fn model_trials_bound_lambda() {
        let domains = [
            ModelDomain::HalfLine,
            ModelDomain::Ball { m: 1 },
            ModelDomain::Ball { m: 3 },
            ModelDomain::Parallelepiped {
                half_sides: vec![0.5, 1.0, 0.3],
            },
            ModelDomain::PlanarAngle { alpha: 0.6 },
            ModelDomain::PlanarAngle { alpha: 2.0 },
            ModelDomain::ConeWithHalfSpace,
        ];
        for d in &domains {
            for gamma in [0.3, 1.0, 7.0] {
                let lam = model_lambda(d, gamma).unwrap();
                for t in model_trial_quotients(d, gamma).unwrap() {
                    assert!(
                        t.value >= lam - 1e-8 * lam.abs().max(1.0),
                        "{d}: {} = {} < {lam}",
                        t.label,
                        t.value
                    );
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn random_splines_satisfy_halfline_inequality(
            n in 2usize..8,
            seed_values in proptest::collection::vec(-2.0f64..2.0, 8),
            seed_slopes in proptest::collection::vec(-5.0f64..5.0, 8),
            steps in proptest::collection::vec(0.05f64..1.0, 8),
            gamma in prop_oneof![Just(0.5), Just(1.0), Just(2.0)],
        ) {
            let mut knots = vec![0.0];
            for h in &steps[..n - 1] {
                knots.push(knots.last().unwrap() + h);
            }
            let mut values = seed_values[..n].to_vec();
            let mut slopes = seed_slopes[..n].to_vec();
            values[n - 1] = 0.0;
            slopes[n - 1] = 0.0;
            let s = CubicHermite::new(knots, values, slopes).unwrap();
            let m = halfline_inequality_check(&HalflineFunction::Spline(s), gamma).unwrap();
            prop_assert!(m >= -1e-8);
        }

        #[test]
        fn trial_quotients_never_undercut_model_lambda(
            which in 0usize..5,
            m in 1u32..5,
            sides in proptest::collection::vec(0.1f64..2.0, 1..4),
            alpha in 0.05f64..3.0,
            gamma in 0.05f64..30.0,
        ) {
            let d = match which {
                0 => ModelDomain::HalfLine,
                1 => ModelDomain::Ball { m },
                2 => ModelDomain::Parallelepiped { half_sides: sides },
                3 => ModelDomain::PlanarAngle { alpha },
                _ => ModelDomain::ConeWithHalfSpace,
            };
            let lam = model_lambda(&d, gamma).unwrap();
            for t in model_trial_quotients(&d, gamma).unwrap() {
                prop_assert!(t.value >= lam - 1e-8 * lam.abs().max(1.0), "{}: {} = {} < {}", d, t.label, t.value, lam);
            }
        }
    }
}
