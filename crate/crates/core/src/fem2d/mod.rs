//! Finite-element oracle for the principal Robin eigenvalue on polygons:
//! P1 elements on boundary-graded Delaunay meshes.

mod eigen;
pub mod linalg;
mod mesh;

pub use eigen::{
    assemble, corner_estimate, principal_eigenvalue, principal_eigenvalue_with, Assembled, EigResult, EigenOptions,
};
pub use mesh::{mesh_polygon, mesh_polygon_with, triangle_shape, BoundaryEdge, Mesh, MeshPolicy, MIN_ANGLE_DEG};

use crate::error::{Error, Result};
use crate::geometry::PlanarPolygon;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub lambda: f64,
    /// Λ_h / γ².
    pub ratio: f64,
    pub dof: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Extrapolated C from the two largest γ (model Λ/γ² = −C + c₁/γ);
    /// `None` with fewer than two points.
    pub c_est: Option<f64>,
}

/// Richardson-style extrapolation of r(γ) = −C + c₁/γ from the last two
/// points: C = −(γ₂r₂ − γ₁r₁)/(γ₂ − γ₁).
pub fn extrapolate_constant(rows: &[SweepRow]) -> Option<f64> {
    let [.., a, b] = rows else { return None };
    Some(-(b.gamma * b.ratio - a.gamma * a.ratio) / (b.gamma - a.gamma))
}

/// Remeshes with a boundary layer for each γ, solves, and fits C.
pub fn gamma_sweep(polygon: &PlanarPolygon, gammas: &[f64], policy: &MeshPolicy) -> Result<SweepResult> {
    gamma_sweep_with(polygon, gammas, policy, &EigenOptions::default())
}

pub fn gamma_sweep_with(
    polygon: &PlanarPolygon,
    gammas: &[f64],
    policy: &MeshPolicy,
    opts: &EigenOptions,
) -> Result<SweepResult> {
    if gammas.is_empty() {
        return Err(Error::domain("gamma grid is empty"));
    }
    if gammas.iter().any(|g| !(*g > 0.0) || !g.is_finite()) || gammas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("gamma values must be positive and increasing"));
    }
    let rows = gammas
        .par_iter()
        .map(|&gamma| {
            let mesh = mesh_polygon_with(polygon, policy, Some(gamma))?;
            let r = principal_eigenvalue_with(&mesh, gamma, opts)?;
            Ok(SweepRow {
                gamma,
                lambda: r.lambda,
                ratio: r.lambda / (gamma * gamma),
                dof: r.dof,
                residual: r.residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let c_est = extrapolate_constant(&rows);
    Ok(SweepResult { rows, c_est })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn extrapolation_recovers_linear_model() {
        let rows: Vec<SweepRow> = [2.0, 4.0, 8.0]
            .iter()
            .map(|&g| SweepRow {
                gamma: g,
                lambda: 0.0,
                ratio: -3.0 + 0.7 / g,
                dof: 0,
                residual: 0.0,
            })
            .collect();
        assert_relative_eq!(extrapolate_constant(&rows).unwrap(), 3.0, epsilon = 1e-12);
        assert!(extrapolate_constant(&rows[..1]).is_none());
    }

    #[test]
    fn sweep_validates_grid() {
        let sq = PlanarPolygon::unit_square();
        assert!(gamma_sweep(&sq, &[], &MeshPolicy::default()).is_err());
        assert!(gamma_sweep(&sq, &[2.0, 1.0], &MeshPolicy::default()).is_err());
        assert!(gamma_sweep(&sq, &[0.0, 1.0], &MeshPolicy::default()).is_err());
    }

    #[test]
    fn square_sweep_is_decreasing_and_concave() {
        let sq = PlanarPolygon::unit_square();
        let policy = MeshPolicy {
            h: 0.1,
            ..MeshPolicy::default()
        };
        let s = gamma_sweep(&sq, &[0.5, 1.0, 1.5, 2.0], &policy).unwrap();
        let l: Vec<f64> = s.rows.iter().map(|r| r.lambda).collect();
        assert!(l.windows(2).all(|w| w[1] < w[0]));
        // equal spacing: second differences are non-positive
        assert!(l.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] <= 1e-9));
    }
}
