//! Scalar kernels shared by the model solvers: the root of μ tanh μ = c,
//! the modified Bessel ratio I_ν(x)/I_{ν−1}(x), and the ball equation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const ROOT_REL_TOL: f64 = 1e-12;
const MAX_ROOT_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootResult {
    pub root: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Unique non-negative root of μ tanh μ = c.
///
/// The bracket starts at [0, 1] and doubles until it straddles the root;
/// bisection narrows it to 1e-6 relative width and Newton finishes.
pub fn mu_tanh_root(c: f64) -> Result<RootResult> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::domain(format!("mu_tanh_root needs finite c >= 0, got {c}")));
    }
    if c == 0.0 {
        return Ok(RootResult {
            root: 0.0,
            residual: 0.0,
            iterations: 0,
        });
    }
    let f = |mu: f64| mu * mu.tanh() - c;
    let df = |mu: f64| {
        let ch = mu.cosh();
        mu.tanh() + if ch.is_finite() { mu / (ch * ch) } else { 0.0 }
    };
    let mut iterations = 0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        iterations += 1;
    }
    while hi - lo > 1e-6 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let mut mu = 0.5 * (lo + hi);
    while iterations < MAX_ROOT_ITERATIONS {
        iterations += 1;
        let step = f(mu) / df(mu);
        if step.abs() <= 4.0 * f64::EPSILON * mu {
            break;
        }
        let next = mu - step;
        mu = if next >= lo && next <= hi {
            next
        } else {
            0.5 * (lo + hi)
        };
        if f(mu) < 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    let residual = f(mu);
    debug_assert!(residual.abs() <= ROOT_REL_TOL * mu.abs().max(1.0));
    Ok(RootResult {
        root: mu,
        residual,
        iterations,
    })
}

/// Ratio I_ν(x)/I_{ν−1}(x) of modified Bessel functions of the first kind.
///
/// Evaluated from the continued fraction
/// `x / (2ν + x² / (2(ν+1) + x² / (2(ν+2) + …)))` with the modified Lentz
/// scheme, so no Bessel value is ever formed. For very large `x` the
/// Hankel expansion of both functions is used instead.
pub fn bessel_ratio(nu: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("bessel_ratio needs x > 0, got {x}")));
    }
    if !(nu >= 0.5) {
        return Err(Error::domain(format!("bessel_ratio needs nu >= 1/2, got {nu}")));
    }
    if x > 2000.0 + 10.0 * nu * nu {
        return Ok(hankel_ratio(nu, x));
    }
    const TINY: f64 = 1e-300;
    // f = 1 / (b1 + 1 / (b2 + ...)),  b_k = 2(ν + k − 1)/x
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    let max_iter = 100_000 + (20.0 * x) as usize;
    for k in 1..=max_iter {
        let b = 2.0 * (nu + (k - 1) as f64) / x;
        d += b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + 1.0 / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            return Ok(f);
        }
    }
    Err(Error::domain(format!(
        "bessel_ratio continued fraction did not converge at nu={nu}, x={x}"
    )))
}

fn hankel_ratio(nu: f64, x: f64) -> f64 {
    // I_μ(x) ~ e^x / sqrt(2πx) Σ_k (-1)^k a_k(μ) / x^k
    let series = |mu: f64| {
        let m4 = 4.0 * mu * mu;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..12 {
            let odd = (2 * k - 1) as f64;
            term *= -(m4 - odd * odd) / (k as f64 * 8.0 * x);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    };
    series(nu) / series(nu - 1.0)
}

/// Λ < 0 for the unit ball B_m with constant weight: solves
/// `√−Λ tanh √−Λ = γ` when m = 1 and `√−Λ I_{m/2}/I_{m/2−1}(√−Λ) = γ` otherwise.
pub fn ball_lambda_root(m: u32, gamma: f64) -> Result<f64> {
    if m < 1 {
        return Err(Error::domain("ball dimension must be >= 1"));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::domain(format!("gamma must be positive, got {gamma}")));
    }
    if m == 1 {
        let mu = mu_tanh_root(gamma)?.root;
        return Ok(-mu * mu);
    }
    let nu = m as f64 / 2.0;
    let g = |x: f64| -> Result<f64> { Ok(x * bessel_ratio(nu, x)? - gamma) };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while g(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    // bisection down to a relative bracket of 1e-13, then one secant step
    let mut glo = -gamma;
    let mut ghi = g(hi)?;
    for _ in 0..MAX_ROOT_ITERATIONS {
        if hi - lo <= ROOT_REL_TOL * 0.1 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm < 0.0 {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
            ghi = gm;
        }
    }
    let x = if ghi != glo {
        lo - glo * (hi - lo) / (ghi - glo)
    } else {
        0.5 * (lo + hi)
    };
    Ok(-x * x)
}
