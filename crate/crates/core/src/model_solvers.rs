//! Exact bottoms of the spectrum for separable model domains.

use crate::error::{Error, Result};
use crate::special_functions::{ball_lambda_root, mu_tanh_root};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelDomain {
    /// (0, ∞) with the Robin condition at 0.
    HalfLine,
    /// Unit ball in R^m.
    Ball { m: u32 },
    /// Product of intervals (−l_j, l_j).
    Parallelepiped { half_sides: Vec<f64> },
    /// Planar angle of half-opening α.
    PlanarAngle { alpha: f64 },
    /// Any cone containing a half-space.
    ConeWithHalfSpace,
}

impl ModelDomain {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelDomain::Ball { m } if *m < 1 => Err(Error::domain("ball dimension must be >= 1")),
            ModelDomain::Parallelepiped { half_sides } => {
                if half_sides.is_empty() {
                    return Err(Error::domain("parallelepiped needs at least one side"));
                }
                if let Some(l) = half_sides.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
                    return Err(Error::domain(format!("half-side {l} must be positive")));
                }
                Ok(())
            }
            ModelDomain::PlanarAngle { alpha } if !(*alpha > 0.0 && *alpha < PI) => {
                Err(Error::domain(format!("half-angle {alpha} outside (0, pi)")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ModelDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelDomain::HalfLine => write!(f, "halfline"),
            ModelDomain::Ball { m } => write!(f, "ball:{m}"),
            ModelDomain::Parallelepiped { half_sides } => {
                let s: Vec<String> = half_sides.iter().map(|l| l.to_string()).collect();
                write!(f, "box:{}", s.join(","))
            }
            ModelDomain::PlanarAngle { alpha } => write!(f, "angle:{alpha}"),
            ModelDomain::ConeWithHalfSpace => write!(f, "halfspace-cone"),
        }
    }
}

/// Parses `halfline`, `ball:M`, `box:L1,L2,...`, `angle:A` and
/// `halfspace-cone`. Angles accept plain radians or `[k]pi[/n]`.
impl FromStr for ModelDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s, None),
        };
        let need = |what: &str| arg.ok_or_else(|| Error::Parse(format!("model '{name}' needs {what}")));
        let domain = match name.to_ascii_lowercase().as_str() {
            "halfline" | "half-line" => ModelDomain::HalfLine,
            "halfspace-cone" | "halfspace" => ModelDomain::ConeWithHalfSpace,
            "ball" => {
                let a = need("a dimension, e.g. ball:3")?;
                let m = a
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad ball dimension '{a}'")))?;
                ModelDomain::Ball { m }
            }
            "box" | "parallelepiped" => {
                let a = need("half-sides, e.g. box:0.5,0.5")?;
                let half_sides = a
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Parse(format!("bad half-side '{t}'")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                ModelDomain::Parallelepiped { half_sides }
            }
            "angle" => ModelDomain::PlanarAngle {
                alpha: parse_angle(need("a half-angle, e.g. angle:pi/4")?)?,
            },
            other => return Err(Error::Parse(format!("unknown model '{other}'"))),
        };
        domain.validate()?;
        Ok(domain)
    }
}

/// Parses radians given as a number or as `[k]pi[/n]`.
pub fn parse_angle(s: &str) -> Result<f64> {
    let t = s.trim().to_ascii_lowercase().replace(' ', "");
    if let Ok(v) = t.parse::<f64>() {
        return Ok(v);
    }
    let bad = || Error::Parse(format!("bad angle '{s}'"));
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n, d.parse::<f64>().map_err(|_| bad())?),
        None => (t.as_str(), 1.0),
    };
    let k = num.strip_suffix("pi").ok_or_else(bad)?.trim_end_matches('*');
    let k = if k.is_empty() {
        1.0
    } else {
        k.parse::<f64>().map_err(|_| bad())?
    };
    Ok(k * PI / den)
}

/// Λ(domain; γ) in closed form or via a scalar root.
pub fn model_lambda(domain: &ModelDomain, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::domain(format!("gamma must be positive, got {gamma}")));
    }
    domain.validate()?;
    match domain {
        ModelDomain::HalfLine | ModelDomain::ConeWithHalfSpace => Ok(-gamma * gamma),
        ModelDomain::Ball { m } => ball_lambda_root(*m, gamma),
        ModelDomain::Parallelepiped { half_sides } => {
            let mut sum = 0.0;
            for &l in half_sides {
                let mu = mu_tanh_root(gamma * l)?.root;
                sum += (mu / l).powi(2);
            }
            Ok(-sum)
        }
        ModelDomain::PlanarAngle { alpha } => {
            if *alpha < 0.5 * PI {
                Ok(-(gamma / alpha.sin()).powi(2))
            } else {
                Ok(-gamma * gamma)
            }
        }
    }
}

/// Λ(K; γ) = γ² Λ(K; 1) for any cone K.
pub fn cone_rescale(lambda_at_one: f64, gamma: f64) -> f64 {
    gamma * gamma * lambda_at_one
}

/// Exponent N in the test-function bound |Λ(Υ_p; γ)| ≳ γ^N for the cusp
/// `|y| < x^p`: 2/(2 − p) for 1 < p < 2 and +∞ (any N) for p ≥ 2.
pub fn cusp_upper_exponent(p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::domain(format!("cusp exponent p must exceed 1, got {p}")));
    }
    Ok(if p >= 2.0 { f64::INFINITY } else { 2.0 / (2.0 - p) })
}
