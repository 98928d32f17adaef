//! End-to-end acceptance suite. Runs without the libtest harness so that
//! the one-line verdict for every criterion is always printed.

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use robin_core::corner_constants::{bounds_codim3, sigma_direct, sigma_general, ThetaSearch};
use robin_core::fem2d::{gamma_sweep, mesh_polygon_with, principal_eigenvalue, MeshPolicy};
use robin_core::geometry::{PlanarPolygon, PolyhedralCone};
use robin_core::model_solvers::{model_lambda, ModelDomain};
use robin_core::quadrature::{integrate_decaying, Adaptive};
use robin_core::rayleigh::{
    cusp_scan, halfline_inequality_check, model_trial_quotients, strip_chi_quotient, strip_chi_quotient_quadrature,
    CubicHermite, Cutoff, HalflineFunction,
};
use robin_core::special_functions::{ball_lambda_root, mu_tanh_root};
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn policy() -> MeshPolicy {
    MeshPolicy {
        h: 0.1,
        ..MeshPolicy::default()
    }
}

fn rectangle_exactness() -> Outcome {
    let start = Instant::now();
    let square = PlanarPolygon::unit_square();
    let mut worst: f64 = 0.0;
    for gamma in [1.0, 2.0, 4.0, 8.0] {
        let mesh = mesh_polygon_with(&square, &policy(), Some(gamma)).map_err(|e| e.to_string())?;
        if mesh.h_boundary > 0.2 / gamma + 1e-12 {
            return Err(format!("h_boundary {} > 0.2/γ at γ = {gamma}", mesh.h_boundary));
        }
        let lambda = principal_eigenvalue(&mesh, gamma).map_err(|e| e.to_string())?.lambda;
        let mu = mu_tanh_root(gamma / 2.0).map_err(|e| e.to_string())?.root;
        let exact = -8.0 * mu * mu;
        worst = worst.max(((lambda - exact) / exact).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 0.01 && secs < 60.0,
        format!("max relative error {worst:.2e} (tol 1e-2), {secs:.1} s (limit 60 s)"),
    )
}

fn slope_at_zero() -> Outcome {
    let mesh = mesh_polygon_with(&PlanarPolygon::unit_square(), &policy(), None).map_err(|e| e.to_string())?;
    let l0 = principal_eigenvalue(&mesh, 0.0).map_err(|e| e.to_string())?.lambda;
    let l1 = principal_eigenvalue(&mesh, 1e-3).map_err(|e| e.to_string())?.lambda;
    let slope = (l1 - l0) / 1e-3;
    check(
        (slope + 4.0).abs() <= 0.02 * 4.0,
        format!("slope {slope:.5} (expected −4 ± 2%)"),
    )
}

fn corner_asymptotics() -> Outcome {
    let sq =
        gamma_sweep(&PlanarPolygon::unit_square(), &[2.0, 4.0, 8.0, 16.0], &policy()).map_err(|e| e.to_string())?;
    let c_sq = sq.c_est.unwrap_or(f64::NAN);
    let tri = gamma_sweep(
        &PlanarPolygon::equilateral_triangle(1.0).map_err(|e| e.to_string())?,
        &[1.0, 2.0, 4.0, 8.0],
        &policy(),
    )
    .map_err(|e| e.to_string())?;
    let ratios: Vec<f64> = tri.rows.iter().map(|r| r.ratio).collect();
    // |Λ|/γ² falls monotonically toward the corner constant 4 (the exact
    // square solution −8μ²/γ² approaches −2 the same way, from below)
    let decreasing = ratios.windows(2).all(|w| w[1].abs() < w[0].abs());
    let at8 = *ratios.last().unwrap();
    let l = gamma_sweep(&PlanarPolygon::l_shape(), &[2.0, 4.0, 8.0, 16.0], &policy()).map_err(|e| e.to_string())?;
    let c_l = l.c_est.unwrap_or(f64::NAN);
    let in_band = |c: f64| (1.7..=2.3).contains(&c);
    check(
        in_band(c_sq) && decreasing && at8 <= -2.5 && in_band(c_l),
        format!(
            "square C_est {c_sq:.4} ∈ [1.7, 2.3]; triangle Λ/γ² {ratios:.3?} with |Λ|/γ² strictly decreasing, {at8:.3} ≤ −2.5 at γ = 8; L-shape C_est {c_l:.4} ∈ [1.7, 2.3]"
        ),
    )
}

fn smooth_case() -> Outcome {
    let disk = PlanarPolygon::regular(64, 1.0).map_err(|e| e.to_string())?;
    let s = gamma_sweep(&disk, &[1.0, 2.0, 4.0, 8.0], &policy()).map_err(|e| e.to_string())?;
    let c = s.c_est.unwrap_or(f64::NAN);
    let mut worst: f64 = 0.0;
    for r in &s.rows {
        let exact = ball_lambda_root(2, r.gamma).map_err(|e| e.to_string())?;
        worst = worst.max(((r.lambda - exact) / exact).abs());
    }
    check(
        (0.9..=1.15).contains(&c) && worst <= 0.03,
        format!("64-gon C_est {c:.4} ∈ [0.9, 1.15]; max deviation from disk {worst:.2e} (tol 3e-2)"),
    )
}

/// J(exp(−x−y−z); 1) on the octant from one-dimensional integrals of e^{−2t}.
fn octant_eigenfunction_quotient() -> Result<f64, String> {
    let quad = Adaptive::with_abs_tol(1e-14);
    let (m1, _) = integrate_decaying(|t| (-2.0 * t).exp(), 0.0, 0.5, &quad).map_err(|e| e.to_string())?;
    // |∇u|² = 3u², each of the three faces carries ∫∫ u² over two variables
    let volume = m1 * m1 * m1;
    let energy = 3.0 * volume;
    let boundary = 3.0 * m1 * m1;
    Ok((energy - boundary) / volume)
}

fn octant_exact() -> Outcome {
    let b = bounds_codim3(&PolyhedralCone::orthant(3), &ThetaSearch::default()).map_err(|e| e.to_string())?;
    let j = octant_eigenfunction_quotient()?;
    check(
        (b.lower - 3.0).abs() <= 1e-6
            && (b.upper - 3.0).abs() <= 1e-6
            && (b.a_opt - 3f64.sqrt()).abs() <= 1e-9
            && (j + b.lower).abs() <= 1e-6,
        format!(
            "lower {:.10}, upper {:.10} (tol 1e-6), a {:.12} vs √3 (tol 1e-9); eigenfunction quotient {j:.10}",
            b.lower, b.upper, b.a_opt
        ),
    )
}

fn circular_cone() -> Outcome {
    let cone = PolyhedralCone::circular(PI / 6.0, 256).map_err(|e| e.to_string())?;
    let b = bounds_codim3(&cone, &ThetaSearch::default()).map_err(|e| e.to_string())?;
    check(
        (b.lower - 4.0).abs() <= 1e-3 && (b.upper - 4.0).abs() <= 1e-3,
        format!("lower {:.6}, upper {:.6} (expected 4 ± 1e-3)", b.lower, b.upper),
    )
}

fn j_reduction() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let b: f64 = rng.random_range(0.05..5.0);
        let db: f64 = rng.random_range(-10.0..10.0);
        let general = sigma_general(b, &[db]).map_err(|e| e.to_string())?.sigma;
        worst = worst.max((general - sigma_direct(b, db)).abs());
    }
    check(
        worst <= 1e-10,
        format!("max |Σ − σ| over 1000 samples {worst:.2e} (tol 1e-10)"),
    )
}

fn cusp_scaling() -> Outcome {
    let start = Instant::now();
    let gammas: Vec<f64> = (0..10).map(|k| 10.0 * 10f64.powf(k as f64 / 9.0)).collect();
    let s = cusp_scan(1.5, &gammas).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    check(
        (s.slope - 4.0).abs() <= 0.05 * 4.0 && secs < 10.0,
        format!(
            "fitted exponent {:.4} (expected 4 ± 5%), {secs:.2} s (limit 10 s)",
            s.slope
        ),
    )
}

fn halfline_suite() -> Outcome {
    let mut rng = StdRng::seed_from_u64(42);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let n = rng.random_range(2..8usize);
        let mut knots = vec![0.0];
        for _ in 1..n {
            let h: f64 = rng.random_range(0.05..1.0);
            knots.push(knots.last().unwrap() + h);
        }
        let mut values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut slopes: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        values[n - 1] = 0.0;
        slopes[n - 1] = 0.0;
        let spline = CubicHermite::new(knots, values, slopes).map_err(|e| e.to_string())?;
        let v = HalflineFunction::Spline(spline);
        for gamma in [0.5, 1.0, 2.0] {
            worst = worst.min(halfline_inequality_check(&v, gamma).map_err(|e| e.to_string())?);
        }
    }
    check(
        worst >= -1e-8,
        format!("min margin over 300 cases {worst:.3e} (must be ≥ −1e-8)"),
    )
}

fn strip_quotient() -> Outcome {
    let psi = Cutoff;
    let gamma = 1.0;
    let excess: Vec<f64> = [10.0, 100.0, 1000.0]
        .iter()
        .map(|&tau| strip_chi_quotient(tau, gamma, &psi).map(|j| j + gamma * gamma))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    // O(1/τ): positive, decreasing, and τ·(J + γ²) bounded by ∫ψ′²/2 · τ/(τ − 1)
    let scaled: Vec<f64> = excess.iter().zip([10.0, 100.0, 1000.0]).map(|(e, t)| e * t).collect();
    let bound = 0.5 * psi.int_dpsi2() * 10.0 / 9.0;
    let decays = excess.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0) && scaled.iter().all(|&s| s <= bound);
    let mut worst: f64 = 0.0;
    for (tau, g) in [(3.0, 1.0), (10.0, 2.0)] {
        let q = strip_chi_quotient_quadrature(tau, g, &psi).map_err(|e| e.to_string())?;
        let c = strip_chi_quotient(tau, g, &psi).map_err(|e| e.to_string())?;
        worst = worst.max((q - c).abs());
    }
    check(
        decays && worst <= 1e-8,
        format!("τ·(J + γ²) = {scaled:.4?} (bounded by {bound:.3}); quadrature vs closed form {worst:.2e} (tol 1e-8)"),
    )
}

fn variational_cross_check() -> Outcome {
    let domains = [
        ModelDomain::HalfLine,
        ModelDomain::Ball { m: 1 },
        ModelDomain::Ball { m: 2 },
        ModelDomain::Ball { m: 3 },
        ModelDomain::Parallelepiped {
            half_sides: vec![0.5, 0.5],
        },
        ModelDomain::Parallelepiped {
            half_sides: vec![1.0, 0.25, 0.6],
        },
        ModelDomain::PlanarAngle { alpha: PI / 4.0 },
        ModelDomain::PlanarAngle { alpha: PI / 6.0 },
        ModelDomain::PlanarAngle { alpha: 3.0 * PI / 4.0 },
        ModelDomain::ConeWithHalfSpace,
    ];
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for d in &domains {
        for gamma in [0.5, 1.0, 4.0, 20.0] {
            let exact = model_lambda(d, gamma).map_err(|e| e.to_string())?;
            for t in model_trial_quotients(d, gamma).map_err(|e| e.to_string())? {
                worst = worst.min((t.value - exact) / exact.abs().max(1.0));
                count += 1;
            }
        }
    }
    check(
        worst >= -1e-8,
        format!("{count} trial quotients, min (J − Λ)/max(|Λ|,1) = {worst:.3e} (must be ≥ −1e-8)"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("rectangle exactness", rectangle_exactness),
        ("slope at zero", slope_at_zero),
        ("corner asymptotics", corner_asymptotics),
        ("smooth case", smooth_case),
        ("octant exact constant", octant_exact),
        ("circular-cone limit", circular_cone),
        ("j-reduction", j_reduction),
        ("cusp scaling", cusp_scaling),
        ("half-line inequality", halfline_suite),
        ("strip quotient", strip_quotient),
        ("variational cross-check", variational_cross_check),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
