//! `analyze` subcommands: profiles, monotone checks, decay bounds, support
//! radii, and config-driven convergence studies.

use serde_json::json;

use voltmap::analysis::{
    check_monotone, convergence_study, median, radial_profile, support_radius,
    theoretical_bounds, DecayBounds, Geometry, RadialProfile,
};
use voltmap::graph::{select_source, SourceRegion};
use voltmap::io;
use voltmap::matrix::Matrix;
use voltmap::solver::{SolverConfig, VoltageFunction};
use voltmap::{Result, VoltError};

use crate::config::{ManifestWriter, RunConfig};
use crate::{
    resolve_out_dir, AnalyzeCommand, BoundsArgs, ConvergenceArgs, GeometryKind, MonotoneArgs,
    ProfileArgs, SupportArgs,
};

pub fn run(cmd: &AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::Profile(args) => profile(args),
        AnalyzeCommand::Monotone(args) => monotone(args),
        AnalyzeCommand::Bounds(args) => bounds(args),
        AnalyzeCommand::Support(args) => support(args),
        AnalyzeCommand::Convergence(args) => convergence(args),
    }
}

fn write_profile_files(
    dir: &std::path::Path,
    manifest: &mut ManifestWriter,
    profile: &RadialProfile,
) -> Result<()> {
    io::write_json(&dir.join("profile.json"), profile)?;
    manifest.record("profile.json");

    let mut csv = String::new();
    for b in 0..profile.n_bins() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            io::fmt_f64(profile.bin_edges[b]),
            io::fmt_f64(profile.bin_edges[b + 1]),
            profile.bin_count[b],
            io::fmt_f64(profile.bin_mean[b]),
            io::fmt_f64(profile.bin_stddev[b]),
        ));
    }
    io::atomic_write(&dir.join("profile.csv"), csv.as_bytes())?;
    manifest.record("profile.csv");

    let centers: Vec<f64> = (0..profile.n_bins())
        .filter(|&b| profile.bin_count[b] > 0)
        .map(|b| profile.bin_center(b))
        .collect();
    let means: Vec<f64> = (0..profile.n_bins())
        .filter(|&b| profile.bin_count[b] > 0)
        .map(|b| profile.bin_mean[b])
        .collect();
    io::write_curve_dat(&dir.join("profile.dat"), &centers, &means)?;
    manifest.record("profile.dat");
    Ok(())
}

fn profile(args: &ProfileArgs) -> Result<()> {
    let dir = resolve_out_dir(&args.out_dir)?;
    let cloud = io::read_cloud(&args.points)?;
    let values = io::read_voltage_csv(&args.voltage)?;
    let source: SourceRegion = select_source(&cloud, &args.center.0, args.source_radius)?;
    let v = VoltageFunction {
        values,
        source,
        support: None,
    };
    let p = radial_profile(&cloud, &v, &args.center.0, args.bins)?;
    let mut manifest = ManifestWriter::new(
        &dir,
        "analyze profile",
        json!({
            "points": args.points.display().to_string(),
            "voltage": args.voltage.display().to_string(),
            "center": args.center.0,
            "source_radius": args.source_radius,
            "bins": args.bins,
        }),
    );
    write_profile_files(&dir, &mut manifest, &p)?;
    manifest.finish()
}

fn monotone(args: &MonotoneArgs) -> Result<()> {
    let dir = resolve_out_dir(&args.out_dir)?;
    let profile: RadialProfile = io::read_json(&args.profile)?;
    let report = check_monotone(&profile, args.slack);
    let mut manifest = ManifestWriter::new(
        &dir,
        "analyze monotone",
        json!({ "profile": args.profile.display().to_string(), "slack": args.slack }),
    );
    io::write_json(&dir.join("monotone.json"), &report)?;
    manifest.record("monotone.json");
    manifest.finish()
}

fn bounds(args: &BoundsArgs) -> Result<()> {
    let dir = resolve_out_dir(&args.out_dir)?;
    let geometry = match args.geometry {
        GeometryKind::Disk => Geometry::Disk { dim: args.dim },
        GeometryKind::Sphere => Geometry::Sphere { dim: args.dim },
    };
    let b = theoretical_bounds(args.r, args.rho, geometry, args.source_radius.unwrap_or(args.r))?;
    let mut manifest = ManifestWriter::new(
        &dir,
        "analyze bounds",
        json!({
            "r": args.r, "rho": args.rho, "dim": args.dim,
            "geometry": geometry, "steps": args.steps,
        }),
    );
    io::write_json(&dir.join("bounds.json"), &b)?;
    manifest.record("bounds.json");
    let zs: Vec<f64> = (1..=args.steps).map(|t| t as f64 * b.step).collect();
    let upper: Vec<f64> = (1..=args.steps).map(|t| b.upper_envelope(t)).collect();
    let lower: Vec<f64> = (1..=args.steps).map(|t| b.lower_envelope(t)).collect();
    io::write_curve_dat(&dir.join("upper_envelope.dat"), &zs, &upper)?;
    manifest.record("upper_envelope.dat");
    io::write_curve_dat(&dir.join("lower_envelope.dat"), &zs, &lower)?;
    manifest.record("lower_envelope.dat");
    manifest.finish()
}

fn support(args: &SupportArgs) -> Result<()> {
    let dir = resolve_out_dir(&args.out_dir)?;
    let profile: RadialProfile = io::read_json(&args.profile)?;
    let bounds: DecayBounds = io::read_json(&args.bounds)?;
    let report = support_radius(&profile, args.tau, &bounds)?;
    let mut manifest = ManifestWriter::new(
        &dir,
        "analyze support",
        json!({
            "profile": args.profile.display().to_string(),
            "bounds": args.bounds.display().to_string(),
            "tau": args.tau,
        }),
    );
    io::write_json(&dir.join("support.json"), &report)?;
    manifest.record("support.json");
    manifest.finish()
}

fn convergence(args: &ConvergenceArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let dir = match &args.out_dir {
        Some(d) => d.clone(),
        None => match &cfg.output_dir {
            Some(d) => d.clone(),
            None => resolve_out_dir(&None)?,
        },
    };
    let manifold = RunConfig::require("manifold", &cfg.manifold)?;
    let kernel = RunConfig::require("kernel", &cfg.kernel)?;
    let rho_g = *RunConfig::require("rho_g", &cfg.rho_g)?;
    let source = RunConfig::require("source", &cfg.source)?;
    let analysis = RunConfig::require("analysis", &cfg.analysis)?;
    let solver = match &cfg.solver {
        Some(s) => s.to_solver_config()?,
        None => SolverConfig::default(),
    };
    let grid: Matrix = analysis.grid.build(manifold)?;

    let report = convergence_study(
        manifold,
        kernel,
        rho_g,
        &source.center,
        source.radius,
        &analysis.n_list,
        &grid,
        &analysis.seeds,
        &solver,
    )?;

    let mut manifest = ManifestWriter::new(
        &dir,
        "analyze convergence",
        serde_json::to_value(&cfg).map_err(|e| VoltError::Config(e.to_string()))?,
    );

    // Per-seed table of successive differences.
    let mut table = String::new();
    for (si, &seed) in report.seeds.iter().enumerate() {
        for (pi, pair) in report.n_list.windows(2).enumerate() {
            table.push_str(&format!(
                "{seed},{},{},{},{}\n",
                pair[0],
                pair[1],
                io::fmt_f64(report.sup_diff[si][pi]),
                io::fmt_f64(report.mean_diff[si][pi]),
            ));
        }
    }
    io::atomic_write(&dir.join("convergence.csv"), table.as_bytes())?;
    manifest.record("convergence.csv");

    // Per-n median curve over seeds; undefined grid points become NaN,
    // which gnuplot skips.
    for (ni, &n) in report.n_list.iter().enumerate() {
        let mut out = String::new();
        for g in 0..grid.nrows() {
            let vals: Vec<f64> = report
                .grids
                .iter()
                .filter_map(|ladder| ladder[ni][g])
                .collect();
            let m = if vals.is_empty() {
                f64::NAN
            } else {
                median(vals.into_iter())
            };
            for &c in grid.row(g) {
                out.push_str(&io::fmt_f64(c));
                out.push(' ');
            }
            out.push_str(&io::fmt_f64(m));
            out.push('\n');
        }
        let name = format!("curve_n{n}.dat");
        io::atomic_write(&dir.join(&name), out.as_bytes())?;
        manifest.record(name);
    }

    let decreasing = report.median_sup.windows(2).all(|w| w[1] < w[0]);
    io::write_json(
        &dir.join("summary.json"),
        &json!({
            "n_list": report.n_list,
            "seeds": report.seeds,
            "median_sup": report.median_sup,
            "median_mean": report.median_mean,
            "excluded": report.excluded,
            "median_sup_strictly_decreasing": decreasing,
        }),
    )?;
    manifest.record("summary.json");
    manifest.finish()
}
