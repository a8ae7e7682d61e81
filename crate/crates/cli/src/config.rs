//! Run configuration schema and the per-run manifest.
//!
//! Configs are strict: unknown keys are rejected at every level so a typo
//! fails loudly instead of silently falling back to a default.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use voltmap::io::write_json;
use voltmap::manifold::{KernelSpec, ManifoldSpec};
use voltmap::matrix::Matrix;
use voltmap::solver::{SolveMode, SolverConfig};
use voltmap::{Result, VoltError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<u64>,
    /// "full", "localized", or "direct".
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub tau: Option<f64>,
}

impl SolverSection {
    pub fn to_solver_config(&self) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::default();
        if let Some(tol) = self.tol {
            cfg.tol = tol;
        }
        if let Some(mi) = self.max_iters {
            cfg.max_iters = mi;
        }
        cfg.mode = match self.mode.as_deref() {
            None | Some("full") => SolveMode::FullPower,
            Some("direct") => SolveMode::DirectOracle,
            Some("localized") => {
                let tau = self.tau.ok_or_else(|| {
                    VoltError::Config("solver.mode = localized requires solver.tau".into())
                })?;
                SolveMode::Localized { tau }
            }
            Some(other) => {
                return Err(VoltError::Config(format!(
                    "solver.mode: unknown mode {other:?} (expected full, localized, or direct)"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkSection {
    pub m: usize,
    /// "uniform_random" or "farthest_point".
    pub strategy: String,
    pub seed: u64,
    #[serde(default)]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    /// Evenly spaced cell centers over the manifold interval.
    Interval { count: usize },
    /// side x side cell centers over the unit square.
    Square { side: usize },
    /// Explicit query points.
    Points { rows: Vec<Vec<f64>> },
}

impl GridConfig {
    pub fn build(&self, manifold: &ManifoldSpec) -> Result<Matrix> {
        match self {
            GridConfig::Interval { count } => {
                let (lo, hi) = match *manifold {
                    ManifoldSpec::Interval { lo, hi } => (lo, hi),
                    _ => {
                        return Err(VoltError::Config(
                            "grid kind interval needs an interval manifold".into(),
                        ))
                    }
                };
                let rows: Vec<Vec<f64>> = (0..*count)
                    .map(|i| vec![lo + (hi - lo) * (i as f64 + 0.5) / *count as f64])
                    .collect();
                Matrix::from_rows(&rows)
            }
            GridConfig::Square { side } => {
                let mut rows = Vec::with_capacity(side * side);
                for i in 0..*side {
                    for j in 0..*side {
                        rows.push(vec![
                            (i as f64 + 0.5) / *side as f64,
                            (j as f64 + 0.5) / *side as f64,
                        ]);
                    }
                }
                Matrix::from_rows(&rows)
            }
            GridConfig::Points { rows } => Matrix::from_rows(rows),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
    pub grid: GridConfig,
    #[serde(default)]
    pub bins: Option<usize>,
}

/// Top-level config document accepted by `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub manifold: Option<ManifoldSpec>,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub rho_g: Option<f64>,
    #[serde(default)]
    pub source: Option<SourceConfig>,
    #[serde(default)]
    pub sink: Option<SourceConfig>,
    #[serde(default)]
    pub solver: Option<SolverSection>,
    #[serde(default)]
    pub landmarks: Option<LandmarkSection>,
    #[serde(default)]
    pub analysis: Option<AnalysisSection>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        voltmap::io::read_json(path)
    }

    pub fn require<'a, T>(field: &'static str, value: &'a Option<T>) -> Result<&'a T> {
        value
            .as_ref()
            .ok_or_else(|| VoltError::Config(format!("config: missing required section {field:?}")))
    }
}

/// Every command writes one of these next to its outputs; re-running the
/// command described by `config` reproduces the CSV outputs byte for byte.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

pub struct ManifestWriter {
    command: String,
    config: serde_json::Value,
    outputs: Vec<String>,
    started: Instant,
    dir: PathBuf,
}

impl ManifestWriter {
    pub fn new(dir: &Path, command: &str, config: serde_json::Value) -> Self {
        ManifestWriter {
            command: command.to_string(),
            config,
            outputs: Vec::new(),
            started: Instant::now(),
            dir: dir.to_path_buf(),
        }
    }

    /// Record an output file (relative to the output directory).
    pub fn record(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn finish(self) -> Result<()> {
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: self.config,
            outputs: self.outputs,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        write_json(&self.dir.join("manifest.json"), &manifest)
    }
}
