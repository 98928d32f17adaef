//! Gauss–Legendre rules and adaptive bisection on top of them.

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on P_n from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Applies the rule on [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        sum * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Shared 10-point rule used by the adaptive integrator.
pub fn gl10() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(10))
}

/// Adaptive integration settings.
#[derive(Debug, Clone, Copy)]
pub struct Adaptive {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for Adaptive {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_depth: 40,
        }
    }
}

impl Adaptive {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    /// Integrates `f` over [a, b] by recursive bisection, comparing the
    /// 10-point rule on a panel with the sum over its two halves. Children get
    /// the parent tolerance scaled by 1/√2; the two-halves estimate is far more
    /// accurate than the difference suggests, so this stays conservative.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let rule = gl10();
        let whole = rule.integrate(a, b, &f);
        let value = self.recurse(&f, rule, a, b, whole, self.abs_tol, 0)?;
        if !value.is_finite() {
            return Err(Error::QuadratureFailure {
                tol: self.abs_tol,
                estimate: f64::INFINITY,
            });
        }
        Ok(value)
    }

    /// Integrates over [a, b] split at the given interior breakpoints.
    pub fn integrate_split<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, breaks: &[f64]) -> Result<f64> {
        let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
        pts.sort_by(f64::total_cmp);
        let mut edges = Vec::with_capacity(pts.len() + 2);
        edges.push(a);
        edges.extend(pts);
        edges.push(b);
        let n = (edges.len() - 1) as f64;
        let panel = Adaptive {
            abs_tol: self.abs_tol / n,
            ..*self
        };
        let mut sum = 0.0;
        for w in edges.windows(2) {
            sum += panel.integrate(&f, w[0], w[1])?;
        }
        Ok(sum)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        rule: &GaussLegendre,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let left = rule.integrate(a, m, f);
        let right = rule.integrate(m, b, f);
        let refined = left + right;
        let err = (refined - whole).abs();
        if err <= tol.max(self.rel_tol * refined.abs()) {
            return Ok(refined);
        }
        if depth >= self.max_depth || !err.is_finite() {
            return Err(Error::QuadratureFailure {
                tol: self.abs_tol,
                estimate: err,
            });
        }
        let l = self.recurse(f, rule, a, m, left, std::f64::consts::FRAC_1_SQRT_2 * tol, depth + 1)?;
        let r = self.recurse(f, rule, m, b, right, std::f64::consts::FRAC_1_SQRT_2 * tol, depth + 1)?;
        Ok(l + r)
    }
}

/// Integrates a decaying function over [a, ∞) by truncating where it drops
/// below `1e-16` of its running peak. Returns the value and the truncation point.
pub fn integrate_decaying<F: Fn(f64) -> f64>(f: F, a: f64, scale: f64, opts: &Adaptive) -> Result<(f64, f64)> {
    let mut lo = a;
    let mut hi = a + scale;
    let mut total = 0.0;
    let mut peak = 0.0f64;
    for _ in 0..200 {
        let part = opts.integrate(&f, lo, hi)?;
        total += part;
        let end = f(hi).abs();
        peak = peak.max(part.abs() / (hi - lo)).max(end);
        if end <= 1e-16 * peak && part.abs() <= 1e-16 * total.abs().max(f64::MIN_POSITIVE) {
            return Ok((total, hi));
        }
        lo = hi;
        hi = lo + 2.0 * (hi - a);
    }
    Err(Error::QuadratureFailure {
        tol: opts.abs_tol,
        estimate: f64::INFINITY,
    })
}
