use crate::UsageError;
use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Corner,
    Sweep,
    Model,
    Cusp,
    Mesh,
}

/// Flags shared by all commands. A JSON config file uses the same names
/// (with underscores) plus `command`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// Domain file (polygon or corner list, JSON)
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub gamma_start: Option<f64>,
    #[arg(long)]
    pub gamma_stop: Option<f64>,
    #[arg(long)]
    pub gamma_count: Option<usize>,
    /// Space the γ grid logarithmically
    #[arg(long)]
    #[serde(default)]
    pub gamma_log: Option<bool>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Numerical tolerance (θ search for corners, eigenvalue change for sweeps)
    #[arg(long)]
    pub tol: Option<f64>,
    /// Model domain: halfline, ball:M, box:L1,L2,..., angle:A, halfspace-cone
    #[arg(long)]
    pub model: Option<String>,
    /// Cusp exponent
    #[arg(long)]
    pub p: Option<f64>,
    /// Interior mesh size
    #[arg(long)]
    pub h: Option<f64>,
    /// Boundary-layer γ for `mesh`
    #[arg(long)]
    pub layer_gamma: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<CommandName>,
    #[serde(flatten)]
    pub flags: Flags,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    /// Command-line values win over the file.
    pub fn merge(self, cli: Flags) -> Flags {
        let f = self.flags;
        Flags {
            input: cli.input.or(f.input),
            gamma_start: cli.gamma_start.or(f.gamma_start),
            gamma_stop: cli.gamma_stop.or(f.gamma_stop),
            gamma_count: cli.gamma_count.or(f.gamma_count),
            gamma_log: cli.gamma_log.or(f.gamma_log),
            out: cli.out.or(f.out),
            tol: cli.tol.or(f.tol),
            model: cli.model.or(f.model),
            p: cli.p.or(f.p),
            h: cli.h.or(f.h),
            layer_gamma: cli.layer_gamma.or(f.layer_gamma),
        }
    }
}

/// γ grid with per-command defaults for missing fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub log: bool,
}

impl GammaGrid {
    pub fn from_flags(flags: &Flags, default: GammaGrid) -> Self {
        GammaGrid {
            start: flags.gamma_start.unwrap_or(default.start),
            stop: flags.gamma_stop.unwrap_or(default.stop),
            count: flags.gamma_count.unwrap_or(default.count),
            log: flags.gamma_log.unwrap_or(default.log),
        }
    }

    pub fn values(&self) -> Result<Vec<f64>, UsageError> {
        let GammaGrid {
            start,
            stop,
            count,
            log,
        } = *self;
        if count == 0 {
            return Err(UsageError("empty gamma grid (--gamma-count must be at least 1)".into()));
        }
        if !(start > 0.0) || !start.is_finite() || !stop.is_finite() {
            return Err(UsageError(format!("gamma grid must be positive, got start = {start}")));
        }
        if count == 1 {
            return Ok(vec![start]);
        }
        if !(stop > start) {
            return Err(UsageError(format!(
                "gamma grid must increase: start {start}, stop {stop}"
            )));
        }
        let n = (count - 1) as f64;
        Ok((0..count)
            .map(|k| {
                let t = k as f64 / n;
                if k + 1 == count {
                    stop
                } else if log {
                    start * (stop / start).powf(t)
                } else {
                    start + t * (stop - start)
                }
            })
            .collect())
    }
}
