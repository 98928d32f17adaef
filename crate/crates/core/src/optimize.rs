//! Derivative-free minimization (Nelder–Mead) and a gnomonic chart of the
//! unit sphere used for multi-start direction searches.

use nalgebra::DVector;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.2,
            x_tol: 1e-11,
            f_tol: 1e-15,
            max_evals: 4000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Minimizes `f` from `x0`. Non-finite values are treated as +inf so callers
/// can encode infeasibility by returning `f64::INFINITY`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let n = x0.len();
    let mut eval = |x: &[f64], count: &mut usize| {
        *count += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut evals = 0usize;
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| {
            values[a]
                .total_cmp(&values[b])
                .then_with(|| lex_cmp(&simplex[a], &simplex[b]))
        });
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let fspread = (values[n] - values[0]).abs();
        if (spread <= opts.x_tol && (fspread <= opts.f_tol.max(1e-15 * values[0].abs()) || !values[n].is_finite()))
            || spread <= 1e-3 * opts.x_tol
            || evals >= opts.max_evals
        {
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            let shrunk: Vec<f64> = best.iter().zip(&simplex[i]).map(|(b, x)| b + sigma * (x - b)).collect();
            values[i] = eval(&shrunk, &mut evals);
            simplex[i] = shrunk;
        }
    }
    Minimum {
        x: simplex[0].clone(),
        value: values[0],
        evals,
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = x.total_cmp(y);
        if c.is_ne() {
            return c;
        }
    }
    std::cmp::Ordering::Equal
}

/// Lexicographic order on directions, used to break ties deterministically.
pub fn lex_less(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    lex_cmp(a.as_slice(), b.as_slice()).is_lt()
}

/// Gnomonic chart of S^{n-1} centred at a unit vector: maps u ∈ R^{n-1} to
/// normalize(center + Σ u_k t_k) with {t_k} an orthonormal basis of center^⊥.
#[derive(Debug, Clone)]
pub struct SphereChart {
    pub center: DVector<f64>,
    pub tangents: Vec<DVector<f64>>,
}

impl SphereChart {
    pub fn new(center: &DVector<f64>) -> Self {
        let c = center.normalize();
        let tangents = orthonormal_complement(&c);
        Self { center: c, tangents }
    }

    pub fn point(&self, u: &[f64]) -> DVector<f64> {
        let mut p = self.center.clone();
        for (t, &w) in self.tangents.iter().zip(u) {
            p.axpy(w, t, 1.0);
        }
        p.normalize()
    }

    pub fn dim(&self) -> usize {
        self.tangents.len()
    }
}

/// Orthonormal basis of the complement of a unit vector, built by
/// Gram–Schmidt against the coordinate axes in a fixed order.
pub fn orthonormal_complement(v: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = v.len();
    let mut basis: Vec<DVector<f64>> = vec![v.clone()];
    let mut axes: Vec<usize> = (0..n).collect();
    axes.sort_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(a.cmp(&b)));
    for k in axes {
        if basis.len() == n {
            break;
        }
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let d = e.dot(b);
                e.axpy(-d, b, 1.0);
            }
        }
        let norm = e.norm();
        if norm > 1e-8 {
            basis.push(e / norm);
        }
    }
    basis.remove(0);
    basis
}

/// Maximizes `f` over the unit sphere from each start, returning the best
/// direction (ties broken lexicographically) and its value. Starts are
/// evaluated in parallel; the reduction runs in start order.
pub fn maximize_on_sphere<F>(f: F, starts: &[DVector<f64>], opts: &NelderMeadOptions) -> Option<(DVector<f64>, f64)>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    use rayon::prelude::*;
    let results: Vec<(DVector<f64>, f64)> = starts
        .par_iter()
        .map(|s| {
            let mut chart = SphereChart::new(s);
            let mut best_val = f(&chart.center);
            let mut best_pt = chart.center.clone();
            // restart from the improved point so the chart stays well conditioned
            for _ in 0..3 {
                let m = nelder_mead(
                    |u| {
                        let v = f(&chart.point(u));
                        if v.is_finite() {
                            -v
                        } else {
                            f64::INFINITY
                        }
                    },
                    &vec![0.0; chart.dim()],
                    opts,
                );
                let p = chart.point(&m.x);
                let val = -m.value;
                if val.is_finite() && (val > best_val || !best_val.is_finite()) {
                    best_val = val;
                    best_pt = p.clone();
                }
                chart = SphereChart::new(&best_pt);
            }
            (best_pt, best_val)
        })
        .collect();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for (p, v) in results {
        if !v.is_finite() {
            continue;
        }
        best = match best {
            None => Some((p, v)),
            Some((bp, bv)) => {
                if v > bv || (v == bv && lex_less(&p, &bp)) {
                    Some((p, v))
                } else {
                    Some((bp, bv))
                }
            }
        };
    }
    best
}
