//! `robin`: reproducible experiments on the large-γ asymptotics of the
//! principal Robin eigenvalue.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod svg;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use config::{CommandName, Flags, GammaGrid, RunConfig};
use robin_core::corner_constants::{domain_constant, DomainConstant, ThetaSearch};
use robin_core::fem2d::{gamma_sweep_with, mesh_polygon_with, EigenOptions, MeshPolicy, SweepResult};
use robin_core::geometry::{CornerDescriptor, PlanarPolygon};
use robin_core::model_solvers::{model_lambda, ModelDomain};
use robin_core::rayleigh::cusp_scan;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Bad invocation: missing or inconsistent flags, empty grids.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(
    name = "robin",
    version,
    about = "Robin eigenvalue asymptotics: corner constants, FEM sweeps, model tables, cusp scans"
)]
struct Cli {
    /// JSON run configuration mirroring the flags, plus "command"
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Per-corner constants C_y and the domain constant C_Omega
    Corner(Flags),
    /// FEM eigenvalues over a γ grid; writes sweep.csv and sweep.svg
    Sweep(Flags),
    /// Exact eigenvalues of a model domain over a γ grid
    Model(Flags),
    /// Growth exponent of the cusp test-function quotient
    Cusp(Flags),
    /// Boundary-graded mesh of a polygon; writes mesh.txt
    Mesh(Flags),
}

impl Cmd {
    fn split(self) -> (CommandName, Flags) {
        match self {
            Cmd::Corner(f) => (CommandName::Corner, f),
            Cmd::Sweep(f) => (CommandName::Sweep, f),
            Cmd::Model(f) => (CommandName::Model, f),
            Cmd::Cusp(f) => (CommandName::Cusp, f),
            Cmd::Mesh(f) => (CommandName::Mesh, f),
        }
    }
}

/// Domain input: a polygon or an explicit list of boundary points.
enum DomainFile {
    Corners(Vec<CornerDescriptor>),
    Polygon(PlanarPolygon),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CornerList {
    corners: Vec<CornerDescriptor>,
}

fn read_domain(path: &Path) -> Result<DomainFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: invalid JSON: {e}", path.display())))?;
    // decode each shape explicitly so the error names the real problem
    let parsed = if value.get("corners").is_some() {
        serde_json::from_value(value).map(|c: CornerList| DomainFile::Corners(c.corners))
    } else {
        serde_json::from_value(value).map(DomainFile::Polygon)
    };
    parsed.map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_polygon(flags: &Flags) -> Result<PlanarPolygon> {
    let path = flags
        .input
        .as_deref()
        .ok_or_else(|| usage("--input <polygon.json> is required"))?;
    match read_domain(path)? {
        DomainFile::Polygon(p) => Ok(p),
        DomainFile::Corners(_) => Err(usage(
            "this command needs a polygon ({\"vertices\": ...}), not a corner list",
        )),
    }
}

fn out_dir(flags: &Flags) -> Result<Option<&Path>> {
    match flags.out.as_deref() {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
            Ok(Some(dir))
        }
        None => Ok(None),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn check_tol(flags: &Flags) -> Result<Option<f64>> {
    match flags.tol {
        Some(t) if !(t > 0.0 && t < 1.0) => Err(usage(format!("--tol must lie in (0, 1), got {t}"))),
        t => Ok(t),
    }
}

fn mesh_policy(flags: &Flags) -> Result<MeshPolicy> {
    let mut policy = MeshPolicy::default();
    if let Some(h) = flags.h {
        if !(h > 0.0 && h.is_finite()) {
            return Err(usage(format!("--h must be positive, got {h}")));
        }
        policy.h = h;
    }
    Ok(policy)
}

// ---------------------------------------------------------------------------
// Commands

fn cmd_corner(flags: &Flags, out: &mut impl Write) -> Result<()> {
    let path = flags
        .input
        .as_deref()
        .ok_or_else(|| usage("--input <domain.json> is required"))?;
    let corners = match read_domain(path)? {
        DomainFile::Polygon(p) => p.corners(),
        DomainFile::Corners(corners) => corners,
    };
    let mut search = ThetaSearch::default();
    if let Some(t) = check_tol(flags)? {
        search.arc_tol = t;
        search.sphere_tol = t;
    }
    let dc = domain_constant(&corners, &search)?;
    report_corners(&dc, out)?;
    if let Some(dir) = out_dir(flags)? {
        let json = serde_json::to_string_pretty(&dc)?;
        fs::write(dir.join("corner.json"), json + "\n")?;
    }
    Ok(())
}

fn report_corners(dc: &DomainConstant, out: &mut impl Write) -> Result<()> {
    writeln!(out, "{:>5}  {:<32} {:>10}  C_y", "#", "point", "weight")?;
    for c in &dc.corners {
        let cy = match &c.bounds {
            Some(b) if b.exact => format!("{:.10} (exact, bracket [{:.10}, {:.10}])", c.value, b.lower, b.upper),
            Some(b) => format!("in [{:.10}, {:.10}] (midpoint {:.10})", b.lower, b.upper, c.value),
            None => format!("{:.10}", c.value),
        };
        writeln!(out, "{:>5}  {:<32} {:>10}  {cy}", c.index, c.label, c.weight)?;
    }
    let top = dc
        .corners
        .iter()
        .find(|c| c.index == dc.argmax)
        .expect("argmax is one of the corners");
    write!(out, "C_Omega = {:.10}", dc.value)?;
    if dc.uncertainty > 0.0 {
        write!(out, " ± {:.3e}", dc.uncertainty)?;
    }
    writeln!(out, "  attained at #{} ({})", top.index, top.label)?;
    Ok(())
}

fn cmd_sweep(flags: &Flags, out: &mut impl Write) -> Result<()> {
    let polygon = read_polygon(flags)?;
    let gammas = GammaGrid::from_flags(
        flags,
        GammaGrid {
            start: 2.0,
            stop: 16.0,
            count: 4,
            log: true,
        },
    )
    .values()?;
    let policy = mesh_policy(flags)?;
    let mut opts = EigenOptions::default();
    if let Some(t) = check_tol(flags)? {
        opts.lambda_tol = t;
    }
    let dc = domain_constant(&polygon.corners(), &ThetaSearch::default())?;
    let sweep = gamma_sweep_with(&polygon, &gammas, &policy, &opts)?;
    report_sweep(&sweep, dc.value, out)?;
    if let Some(dir) = out_dir(flags)? {
        write_csv(&dir.join("sweep.csv"), &sweep.rows)?;
        let points: Vec<(f64, f64)> = sweep.rows.iter().map(|r| (r.gamma, r.ratio)).collect();
        let label = format!("-C_Omega = {:.4}", -dc.value);
        let plot = svg::Plot {
            title: "FEM principal Robin eigenvalue",
            x_label: "gamma",
            y_label: "Lambda / gamma^2",
            points: &points,
            reference: Some((-dc.value, &label)),
        };
        fs::write(dir.join("sweep.svg"), plot.render())?;
    }
    Ok(())
}

fn report_sweep(sweep: &SweepResult, c_omega: f64, out: &mut impl Write) -> Result<()> {
    writeln!(
        out,
        "{:>12} {:>20} {:>14} {:>8} {:>10}",
        "gamma", "lambda", "lambda/gamma^2", "dof", "residual"
    )?;
    for r in &sweep.rows {
        writeln!(
            out,
            "{:>12.6} {:>20.10} {:>14.8} {:>8} {:>10.2e}",
            r.gamma, r.lambda, r.ratio, r.dof, r.residual
        )?;
    }
    writeln!(out, "predicted C_Omega = {c_omega:.10}")?;
    if let Some(c) = sweep.c_est {
        writeln!(
            out,
            "extrapolated C    = {c:.10}  (relative deviation {:.3e})",
            (c - c_omega) / c_omega
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ModelRow {
    gamma: f64,
    lambda: f64,
    ratio: f64,
}

fn cmd_model(flags: &Flags, out: &mut impl Write) -> Result<()> {
    let name = flags
        .model
        .as_deref()
        .ok_or_else(|| usage("--model is required (halfline, ball:M, box:L1,L2, angle:A, halfspace-cone)"))?;
    let domain: ModelDomain = name.parse()?;
    let gammas = GammaGrid::from_flags(
        flags,
        GammaGrid {
            start: 1.0,
            stop: 10.0,
            count: 10,
            log: false,
        },
    )
    .values()?;
    let rows = gammas
        .iter()
        .map(|&gamma| {
            let lambda = model_lambda(&domain, gamma)?;
            Ok(ModelRow {
                gamma,
                lambda,
                ratio: lambda / (gamma * gamma),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    writeln!(out, "model {name}")?;
    writeln!(out, "{:>12} {:>22} {:>16}", "gamma", "lambda", "lambda/gamma^2")?;
    for r in &rows {
        writeln!(out, "{:>12.6} {:>22.12} {:>16.10}", r.gamma, r.lambda, r.ratio)?;
    }
    if let Some(dir) = out_dir(flags)? {
        write_csv(&dir.join("model.csv"), &rows)?;
    }
    Ok(())
}

fn cmd_cusp(flags: &Flags, out: &mut impl Write) -> Result<()> {
    let p = flags
        .p
        .ok_or_else(|| usage("--p is required (cusp exponent, 1 < p < 2)"))?;
    let gammas = GammaGrid::from_flags(
        flags,
        GammaGrid {
            start: 10.0,
            stop: 100.0,
            count: 10,
            log: true,
        },
    )
    .values()?;
    let scan = cusp_scan(p, &gammas)?;
    writeln!(out, "cusp p = {p}")?;
    writeln!(out, "{:>12} {:>22} {:>12} {:>12}", "gamma", "J", "log gamma", "log(-J)")?;
    for q in &scan.points {
        writeln!(
            out,
            "{:>12.6} {:>22.10e} {:>12.6} {:>12.6}",
            q.gamma, q.j, q.log_gamma, q.log_neg_j
        )?;
    }
    writeln!(
        out,
        "fitted exponent = {:.6}  predicted 2/(2-p) = {:.6}  relative deviation {:.3e}",
        scan.slope,
        scan.predicted,
        (scan.slope - scan.predicted) / scan.predicted
    )?;
    if let Some(dir) = out_dir(flags)? {
        write_csv(&dir.join("cusp.csv"), &scan.points)?;
    }
    Ok(())
}

fn cmd_mesh(flags: &Flags, out: &mut impl Write) -> Result<()> {
    let polygon = read_polygon(flags)?;
    let policy = mesh_policy(flags)?;
    if let Some(g) = flags.layer_gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(usage(format!("--layer-gamma must be positive, got {g}")));
        }
    }
    let mesh = mesh_polygon_with(&polygon, &policy, flags.layer_gamma)?;
    writeln!(
        out,
        "nodes {}  triangles {}  boundary edges {}  h_max {:.4}  h_boundary {:.4}  min angle {:.2} deg",
        mesh.nodes.len(),
        mesh.triangles.len(),
        mesh.boundary_edges.len(),
        mesh.h_max,
        mesh.h_boundary,
        mesh.min_angle_deg()
    )?;
    if let Some(dir) = out_dir(flags)? {
        fs::write(dir.join("mesh.txt"), mesh.to_text())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (name, cli_flags) = match cli.command {
        Some(c) => {
            let (n, f) = c.split();
            (Some(n), f)
        }
        None => (None, Flags::default()),
    };
    let (name, flags) = match &cli.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            let file_cmd = cfg.command;
            if let (Some(a), Some(b)) = (name, file_cmd) {
                if a != b {
                    return Err(usage(format!("config command {b:?} conflicts with subcommand {a:?}")));
                }
            }
            (name.or(file_cmd), cfg.merge(cli_flags))
        }
        None => (name, cli_flags),
    };
    let name = name.ok_or_else(|| usage("no command given (use a subcommand or \"command\" in --config)"))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match name {
        CommandName::Corner => cmd_corner(&flags, &mut out),
        CommandName::Sweep => cmd_sweep(&flags, &mut out),
        CommandName::Model => cmd_model(&flags, &mut out),
        CommandName::Cusp => cmd_cusp(&flags, &mut out),
        CommandName::Mesh => cmd_mesh(&flags, &mut out),
    }
}

/// 2 for bad input, 3 for numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<robin_core::Error>() {
            return if e.is_validation() { 2 } else { 3 };
        }
        if cause.is::<UsageError>()
            || cause.is::<std::io::Error>()
            || cause.is::<serde_json::Error>()
            || cause.is::<csv::Error>()
        {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
