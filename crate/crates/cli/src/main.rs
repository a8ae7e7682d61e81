//! `voltmap`: grounded voltage functions on point-cloud graphs.
//!
//! Subcommands cover the full pipeline: `sample` a manifold, `build` the
//! grounded graph, `solve` a source's voltage, run `baseline` comparison
//! fields, `embed` with landmark voltages, `analyze` profiles and decay,
//! and `repro` scripted figure recipes.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure.

mod analyze;
mod commands;
mod config;
mod repro;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use voltmap::VoltError;

#[derive(Parser)]
#[command(name = "voltmap", version, about = "Grounded voltage functions on point-cloud graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a deterministic uniform sample from a benchmark manifold.
    Sample(SampleArgs),
    /// Build the grounded resistor graph for a point cloud.
    Build(BuildArgs),
    /// Solve the grounded voltage for one source region.
    Solve(SolveArgs),
    /// Source-to-sink comparison fields (PM and effective-resistance).
    Baseline(BaselineArgs),
    /// Landmark voltage embedding with optional low-dimensional projection.
    Embed(EmbedArgs),
    /// Profiles, decay bounds, support radii, convergence studies.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Scripted figure-data recipes.
    Repro(ReproArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ManifoldKind {
    Interval,
    UnitSquare,
    Sphere,
    SphereSegment,
    Disk,
}

#[derive(Args)]
pub struct SampleArgs {
    #[arg(long, value_enum)]
    manifold: ManifoldKind,
    /// Interval lower end.
    #[arg(long)]
    lo: Option<f64>,
    /// Interval upper end.
    #[arg(long)]
    hi: Option<f64>,
    /// Ambient dimension (sphere, sphere-segment, disk).
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    azimuth_lo: Option<f64>,
    #[arg(long)]
    azimuth_hi: Option<f64>,
    /// Disk radius; defaults to the unit-volume radius.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Radial,
    Gaussian,
}

#[derive(Args)]
pub struct BuildArgs {
    /// Points CSV (a .json sidecar next to it is honored when present).
    #[arg(long)]
    points: PathBuf,
    #[arg(long, value_enum)]
    kernel: KernelKind,
    /// Radial kernel bandwidth.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Gaussian kernel temperature.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    rho_g: f64,
    /// Keep Gaussian weights beyond 3 sigma instead of dropping them.
    #[arg(long)]
    no_cutoff: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeKind {
    Full,
    Localized,
    Direct,
}

#[derive(Args)]
pub struct SolveArgs {
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    edges: PathBuf,
    /// Graph sidecar; defaults to the edges path with a .json extension.
    #[arg(long)]
    graph_meta: Option<PathBuf>,
    /// Source center, comma-separated coordinates.
    #[arg(long)]
    center: Coords,
    #[arg(long)]
    source_radius: f64,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long, value_enum, default_value = "full")]
    mode: ModeKind,
    /// Support threshold for the localized mode.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodKind {
    Pm,
    RegionEr,
    DensityEr,
    Er,
}

#[derive(Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    method: MethodKind,
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    graph_meta: Option<PathBuf>,
    #[arg(long)]
    source_center: Coords,
    #[arg(long)]
    source_radius: f64,
    #[arg(long)]
    sink_center: Coords,
    #[arg(long)]
    sink_radius: f64,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyKind {
    UniformRandom,
    FarthestPoint,
}

#[derive(Args)]
pub struct EmbedArgs {
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    graph_meta: Option<PathBuf>,
    /// Number of landmarks.
    #[arg(long)]
    landmarks: usize,
    #[arg(long, value_enum, default_value = "uniform-random")]
    strategy: StrategyKind,
    #[arg(long)]
    seed: u64,
    /// Source radius; defaults to the kernel bandwidth.
    #[arg(long)]
    source_radius: Option<f64>,
    /// Project to this many dimensions with centered SVD.
    #[arg(long)]
    project: Option<usize>,
    /// File of node indices (one per line) to re-embed as a subset.
    #[arg(long)]
    subset: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// Bin a solved voltage against distance from a center.
    Profile(ProfileArgs),
    /// Check a stored profile for monotone decay.
    Monotone(MonotoneArgs),
    /// Theoretical decay envelopes for a kernel radius and ground weight.
    Bounds(BoundsArgs),
    /// Empirical support radius against the theoretical window.
    Support(SupportArgs),
    /// Convergence-in-n study driven by a config file.
    Convergence(ConvergenceArgs),
}

#[derive(Args)]
pub struct ProfileArgs {
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    voltage: PathBuf,
    #[arg(long)]
    center: Coords,
    #[arg(long)]
    source_radius: f64,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct MonotoneArgs {
    /// profile.json produced by `analyze profile`.
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    slack: f64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeometryKind {
    Disk,
    Sphere,
}

#[derive(Args)]
pub struct BoundsArgs {
    #[arg(long)]
    r: f64,
    #[arg(long)]
    rho: f64,
    #[arg(long, value_enum)]
    geometry: GeometryKind,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long)]
    source_radius: Option<f64>,
    /// Envelope steps to tabulate.
    #[arg(long, default_value_t = 10)]
    steps: u32,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct SupportArgs {
    #[arg(long)]
    profile: PathBuf,
    /// bounds.json produced by `analyze bounds`.
    #[arg(long)]
    bounds: PathBuf,
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct ConvergenceArgs {
    /// RunConfig JSON with manifold, kernel, rho_g, source, analysis.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureKind {
    FigErCompare,
    FigVoltageGrounded,
    FigSphereEmbedding,
}

#[derive(Args)]
pub struct ReproArgs {
    #[arg(value_enum)]
    figure: FigureKind,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Comma-separated coordinate list, e.g. `0.1,0.1`.
#[derive(Clone, Debug)]
pub struct Coords(pub Vec<f64>);

impl std::str::FromStr for Coords {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad coordinate {tok:?}"))
            })
            .collect::<Result<Vec<f64>, _>>()
            .map(Coords)
    }
}

/// `--out-dir` falls back to `VOLTMAP_OUT_DIR`.
pub fn resolve_out_dir(flag: &Option<PathBuf>) -> Result<PathBuf, VoltError> {
    if let Some(dir) = flag {
        return Ok(dir.clone());
    }
    match std::env::var_os("VOLTMAP_OUT_DIR") {
        Some(dir) => Ok(PathBuf::from(dir)),
        None => Err(VoltError::Config(
            "no output directory: pass --out-dir or set VOLTMAP_OUT_DIR".into(),
        )),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Sample(args) => commands::sample(&args),
        Command::Build(args) => commands::build(&args),
        Command::Solve(args) => commands::solve(&args),
        Command::Baseline(args) => commands::baseline(&args),
        Command::Embed(args) => commands::embed(&args),
        Command::Analyze(cmd) => analyze::run(&cmd),
        Command::Repro(args) => repro::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut cause = std::error::Error::source(&e);
            while let Some(c) = cause {
                eprintln!("  caused by: {c}");
                cause = c.source();
            }
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
