//! P1 assembly of (A − γB) u = λ M u and a shift-invert block subspace
//! iteration for its smallest eigenvalue.

use super::linalg::{reverse_cuthill_mckee, CsrMatrix, Skyline, SkylineCholesky};
use super::mesh::Mesh;
use crate::corner_constants::c2d;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Stiffness, boundary mass and mass matrices in RCM order.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub stiffness: CsrMatrix,
    pub boundary: CsrMatrix,
    pub mass: CsrMatrix,
    /// `perm[new] = old` node index.
    pub perm: Vec<usize>,
}

pub fn assemble(mesh: &Mesh) -> Result<Assembled> {
    mesh.validate()?;
    let n = mesh.nodes.len();
    let mut adjacency = vec![Vec::new(); n];
    for t in &mesh.triangles {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }
    for a in &mut adjacency {
        a.sort_unstable();
        a.dedup();
    }
    let perm = reverse_cuthill_mckee(&adjacency);
    let mut inv = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }

    let mut ks = Vec::with_capacity(9 * mesh.triangles.len());
    let mut ms = Vec::with_capacity(9 * mesh.triangles.len());
    for t in &mesh.triangles {
        let p = t.map(|v| mesh.nodes[v]);
        let area = mesh.triangle_area(t);
        let mut b = [0.0; 3];
        let mut c = [0.0; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            b[i] = (p[j][1] - p[k][1]) / (2.0 * area);
            c[i] = (p[k][0] - p[j][0]) / (2.0 * area);
        }
        for i in 0..3 {
            for j in 0..3 {
                let (gi, gj) = (inv[t[i]], inv[t[j]]);
                ks.push((gi, gj, area * (b[i] * b[j] + c[i] * c[j])));
                ms.push((gi, gj, area / 12.0 * if i == j { 2.0 } else { 1.0 }));
            }
        }
    }
    let mut bs = Vec::with_capacity(4 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [a, b] = e.nodes;
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
        let w = e.weight * len / 6.0;
        let (ia, ib) = (inv[a], inv[b]);
        bs.extend([(ia, ia, 2.0 * w), (ib, ib, 2.0 * w), (ia, ib, w), (ib, ia, w)]);
    }
    Ok(Assembled {
        stiffness: CsrMatrix::from_triplets(n, ks),
        boundary: CsrMatrix::from_triplets(n, bs),
        mass: CsrMatrix::from_triplets(n, ms),
        perm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigResult {
    pub lambda: f64,
    /// ‖(K − λM)u‖ / (‖Ku‖ + max(|λ|, 1) ‖Mu‖).
    pub residual: f64,
    pub iterations: usize,
    pub dof: usize,
    /// Final shift σ used in (K − σM)⁻¹.
    pub shift: f64,
    /// Eigenvector in original node order, M-normalized.
    #[serde(skip)]
    pub eigenvector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    pub block: usize,
    pub max_iterations: usize,
    /// Relative change of λ between iterations.
    pub lambda_tol: f64,
    pub residual_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            block: 8,
            max_iterations: 500,
            lambda_tol: 1e-10,
            residual_tol: 1e-8,
        }
    }
}

/// Upper estimate of C_Ω from the boundary polygon of the mesh: the largest
/// c2d(half interior angle) · G² over boundary nodes.
pub fn corner_estimate(mesh: &Mesh) -> f64 {
    use std::collections::HashMap;
    // orient each boundary edge so that the interior lies on its left
    let mut tri_edge: HashMap<(usize, usize), ()> = HashMap::new();
    for t in &mesh.triangles {
        for i in 0..3 {
            tri_edge.insert((t[i], t[(i + 1) % 3]), ());
        }
    }
    let mut outgoing: HashMap<usize, (usize, f64)> = HashMap::new();
    let mut incoming: HashMap<usize, (usize, f64)> = HashMap::new();
    for e in &mesh.boundary_edges {
        let [a, b] = e.nodes;
        let (a, b) = if tri_edge.contains_key(&(a, b)) { (a, b) } else { (b, a) };
        outgoing.insert(a, (b, e.weight));
        incoming.insert(b, (a, e.weight));
    }
    let mut best = 0.0f64;
    for (&v, &(next, g_out)) in &outgoing {
        let Some(&(prev, g_in)) = incoming.get(&v) else {
            continue;
        };
        let p = mesh.nodes[v];
        let (u, w) = (mesh.nodes[prev], mesh.nodes[next]);
        let d_in = [p[0] - u[0], p[1] - u[1]];
        let d_out = [w[0] - p[0], w[1] - p[1]];
        // interior angle = π − turning angle
        let turn = (d_in[0] * d_out[1] - d_in[1] * d_out[0]).atan2(d_in[0] * d_out[0] + d_in[1] * d_out[1]);
        let half = 0.5 * (std::f64::consts::PI - turn);
        let g = g_in.min(g_out).max(0.0);
        let c = c2d(half.clamp(1e-6, std::f64::consts::PI - 1e-6)).unwrap_or(1.0);
        best = best.max(c * g * g);
    }
    best
}

/// Smallest eigenvalue of (A − γB) u = λ M u.
pub fn principal_eigenvalue(mesh: &Mesh, gamma: f64) -> Result<EigResult> {
    principal_eigenvalue_with(mesh, gamma, &EigenOptions::default())
}

pub fn principal_eigenvalue_with(mesh: &Mesh, gamma: f64, opts: &EigenOptions) -> Result<EigResult> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::domain(format!(
            "gamma must be finite and non-negative, got {gamma}"
        )));
    }
    if opts.block == 0 || opts.max_iterations == 0 {
        return Err(Error::domain("block size and iteration limit must be positive"));
    }
    let asm = assemble(mesh)?;
    let k = asm.stiffness.add_scaled(-gamma, &asm.boundary);
    let area = mesh.area();
    let gmax = mesh.boundary_edges.iter().map(|e| e.weight).fold(0.0f64, f64::max);
    let weighted_length: f64 = mesh
        .boundary_edges
        .iter()
        .map(|e| {
            let (p, q) = (mesh.nodes[e.nodes[0]], mesh.nodes[e.nodes[1]]);
            e.weight * (p[0] - q[0]).hypot(p[1] - q[1])
        })
        .sum();
    // below both −C γ² and the constant-function quotient −γ ∫G / |Ω|
    let c_upper = corner_estimate(mesh).max(gmax * gmax);
    let shift0 = -1.5 * (c_upper * gamma * gamma).max(gamma * weighted_length / area) - 1.0;
    let solver = Solver::new(&k, &asm.mass, &asm.perm, mesh, *opts);
    let mut r = solver.run(shift0)?;
    // back to original numbering
    let mut u = vec![0.0; r.eigenvector.len()];
    for (new, &old) in asm.perm.iter().enumerate() {
        u[old] = r.eigenvector[new];
    }
    // fix the sign so results are reproducible
    if u.iter().sum::<f64>() < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
    r.eigenvector = u;
    Ok(r)
}

struct Solver<'a> {
    k: &'a CsrMatrix,
    m: &'a CsrMatrix,
    opts: EigenOptions,
    start: Vec<Vec<f64>>,
}

fn factor_shifted(k: &CsrMatrix, m: &CsrMatrix, sigma: f64) -> Result<SkylineCholesky> {
    Skyline::from_csr(&k.add_scaled(-sigma, m)).factorize()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl<'a> Solver<'a> {
    fn new(k: &'a CsrMatrix, m: &'a CsrMatrix, perm: &[usize], mesh: &Mesh, opts: EigenOptions) -> Self {
        // smooth deterministic start block: low-degree monomials in x, y
        let n = k.dim();
        let (mut cx, mut cy) = (0.0, 0.0);
        for p in &mesh.nodes {
            cx += p[0];
            cy += p[1];
        }
        cx /= mesh.nodes.len() as f64;
        cy /= mesh.nodes.len() as f64;
        let powers = [
            (0, 0),
            (1, 0),
            (0, 1),
            (2, 0),
            (1, 1),
            (0, 2),
            (3, 0),
            (0, 3),
            (2, 1),
            (1, 2),
            (4, 0),
            (0, 4),
        ];
        let block = opts.block.min(n);
        let start = (0..block)
            .map(|c| {
                (0..n)
                    .map(|new| {
                        let p = mesh.nodes[perm[new]];
                        let (x, y) = (p[0] - cx, p[1] - cy);
                        match powers.get(c) {
                            Some(&(a, b)) => x.powi(a) * y.powi(b),
                            None => (12.9898 * new as f64 + 78.233 * c as f64).sin(),
                        }
                    })
                    .collect()
            })
            .collect();
        Self { k, m, opts, start }
    }

    /// M-orthonormalizes the block in place (modified Gram–Schmidt, twice),
    /// replacing dependent columns.
    fn m_orthonormalize(&self, x: &mut [Vec<f64>]) {
        let n = self.k.dim();
        let mut mx = vec![0.0; n];
        for c in 0..x.len() {
            for attempt in 0..3 {
                for _ in 0..2 {
                    for d in 0..c {
                        self.m.mul_vec(&x[d], &mut mx);
                        let proj: f64 = x[c].iter().zip(&mx).map(|(a, b)| a * b).sum();
                        let (head, tail) = x.split_at_mut(c);
                        for (xi, di) in tail[0].iter_mut().zip(&head[d]) {
                            *xi -= proj * di;
                        }
                    }
                }
                self.m.mul_vec(&x[c], &mut mx);
                let nm = x[c].iter().zip(&mx).map(|(a, b)| a * b).sum::<f64>().sqrt();
                if nm > 1e-10 && nm.is_finite() {
                    x[c].iter_mut().for_each(|v| *v /= nm);
                    break;
                }
                // dependent column: replace by a fresh oscillatory vector
                x[c] = (0..n)
                    .map(|i| (12.9898 * i as f64 + 4.1414 * (c + 7 * attempt + 1) as f64).sin())
                    .collect();
            }
        }
    }

    fn factor_below(&self, mut sigma: f64) -> Result<(SkylineCholesky, f64)> {
        for _ in 0..60 {
            match factor_shifted(self.k, self.m, sigma) {
                Ok(f) => return Ok((f, sigma)),
                Err(_) => sigma = 2.0 * sigma - 1.0,
            }
        }
        Err(Error::FactorizationFailure("no positive definite shift found".into()))
    }

    fn run(&self, shift0: f64) -> Result<EigResult> {
        let n = self.k.dim();
        let (mut fact, mut sigma) = self.factor_below(shift0)?;
        let mut x = self.start.clone();
        self.m_orthonormalize(&mut x);
        let mut prev = f64::INFINITY;
        let mut reshifted = false;
        let mut tmp = vec![0.0; n];
        for it in 1..=self.opts.max_iterations {
            // Y = (K − σM)⁻¹ M X
            for col in x.iter_mut() {
                self.m.mul_vec(col, &mut tmp);
                fact.solve_in_place(&mut tmp);
                std::mem::swap(col, &mut tmp);
            }
            self.m_orthonormalize(&mut x);
            // Rayleigh–Ritz with M-orthonormal basis
            let b = x.len();
            let mut kx = vec![vec![0.0; n]; b];
            for (c, col) in x.iter().enumerate() {
                self.k.mul_vec(col, &mut kx[c]);
            }
            let kr = DMatrix::from_fn(b, b, |i, j| {
                let v: f64 = x[i].iter().zip(&kx[j]).map(|(a, c)| a * c).sum();
                let w: f64 = x[j].iter().zip(&kx[i]).map(|(a, c)| a * c).sum();
                0.5 * (v + w)
            });
            let eig = SymmetricEigen::new(kr);
            let mut idx: Vec<usize> = (0..b).collect();
            idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
            let rotated: Vec<Vec<f64>> = idx
                .iter()
                .map(|&c| {
                    let mut v = vec![0.0; n];
                    for (r, col) in x.iter().enumerate() {
                        let w = eig.eigenvectors[(r, c)];
                        for (vi, xi) in v.iter_mut().zip(col) {
                            *vi += w * xi;
                        }
                    }
                    v
                })
                .collect();
            x = rotated;
            let lambda = eig.eigenvalues[idx[0]];

            // residual of the leading pair
            let mut ku = vec![0.0; n];
            let mut mu = vec![0.0; n];
            self.k.mul_vec(&x[0], &mut ku);
            self.m.mul_vec(&x[0], &mut mu);
            let r: Vec<f64> = ku.iter().zip(&mu).map(|(a, b)| a - lambda * b).collect();
            let residual = norm(&r) / (norm(&ku) + lambda.abs().max(1.0) * norm(&mu)).max(f64::MIN_POSITIVE);

            let change = (lambda - prev).abs();
            if change <= self.opts.lambda_tol * lambda.abs().max(1.0) && residual < self.opts.residual_tol {
                return Ok(EigResult {
                    lambda,
                    residual,
                    iterations: it,
                    dof: n,
                    shift: sigma,
                    eigenvector: x.swap_remove(0),
                });
            }
            // once λ is roughly known, move the shift just below it
            if !reshifted && it >= 3 && change <= 1e-3 * lambda.abs().max(1.0) {
                reshifted = true;
                let target = lambda - 0.05 * lambda.abs().max(1.0);
                if target > sigma {
                    if let Ok(f) = factor_shifted(self.k, self.m, target) {
                        fact = f;
                        sigma = target;
                    }
                }
            }
            prev = lambda;
        }
        Err(Error::NoConvergence {
            iterations: self.opts.max_iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem2d::mesh::mesh_polygon;
    use crate::geometry::PlanarPolygon;
    use crate::model_solvers::{model_lambda, ModelDomain};
    use approx::assert_relative_eq;

    #[test]
    fn neumann_case_has_zero_eigenvalue_and_constant_vector() {
        let m = mesh_polygon(&PlanarPolygon::unit_square(), 0.2, None).unwrap();
        let r = principal_eigenvalue(&m, 0.0).unwrap();
        assert!(r.lambda.abs() < 1e-10, "{}", r.lambda);
        let u0 = r.eigenvector[0];
        for u in &r.eigenvector {
            assert_relative_eq!(*u, u0, max_relative = 1e-6);
        }
    }

    #[test]
    fn square_matches_transcendental_solution() {
        let sq = PlanarPolygon::unit_square();
        let m = mesh_polygon(&sq, 0.1, Some(2.0)).unwrap();
        let r = principal_eigenvalue(&m, 2.0).unwrap();
        let exact = model_lambda(
            &ModelDomain::Parallelepiped {
                half_sides: vec![0.5, 0.5],
            },
            2.0,
        )
        .unwrap();
        assert!(r.residual < 1e-8);
        assert!((r.lambda - exact).abs() < 0.01 * exact.abs(), "{} vs {exact}", r.lambda);
        // the Ritz value is an upper bound of the exact one up to edge quadrature, which is exact here
        assert!(r.lambda >= exact - 1e-9);
    }

    #[test]
    fn small_gamma_slope() {
        let m = mesh_polygon(&PlanarPolygon::unit_square(), 0.1, None).unwrap();
        let l0 = principal_eigenvalue(&m, 0.0).unwrap().lambda;
        let l1 = principal_eigenvalue(&m, 1e-3).unwrap().lambda;
        let slope = (l1 - l0) / 1e-3;
        assert!((slope + 4.0).abs() < 0.08, "{slope}");
    }

    #[test]
    fn corner_estimate_of_square_and_weights() {
        let m = mesh_polygon(&PlanarPolygon::unit_square(), 0.3, None).unwrap();
        assert_relative_eq!(corner_estimate(&m), 2.0, max_relative = 1e-9);
        let tri = mesh_polygon(&PlanarPolygon::equilateral_triangle(1.0).unwrap(), 0.3, None).unwrap();
        assert_relative_eq!(corner_estimate(&tri), 4.0, max_relative = 1e-9);
    }

    #[test]
    fn nested_refinement_does_not_raise_lambda() {
        let m = mesh_polygon(&PlanarPolygon::l_shape(), 0.15, None).unwrap();
        let fine = m.refine_uniform();
        let a = principal_eigenvalue(&m, 3.0).unwrap().lambda;
        let b = principal_eigenvalue(&fine, 3.0).unwrap().lambda;
        assert!(b <= a + 1e-10, "{b} > {a}");
    }

    #[test]
    fn rejects_negative_gamma() {
        let m = mesh_polygon(&PlanarPolygon::unit_square(), 0.5, None).unwrap();
        assert!(principal_eigenvalue(&m, -1.0).is_err());
    }
}
