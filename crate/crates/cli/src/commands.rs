//! The pipeline commands: sample, build, solve, baseline, embed.

use std::path::{Path, PathBuf};

use serde_json::json;

use voltmap::baseline::{er_voltage, solve_pm, BaselineMode, SourceSinkSpec};
use voltmap::embed::{
    mds_project, select_landmarks, voltage_embedding, LandmarkStrategy,
};
use voltmap::graph::{
    build_grounded_graph_with, select_source, BuildOptions, GroundedGraph,
};
use voltmap::io;
use voltmap::manifold::{sample_manifold, KernelSpec, ManifoldSpec};
use voltmap::matrix::Matrix;
use voltmap::solver::{solve as solve_voltage, SolveMode, SolverConfig};
use voltmap::{Result, VoltError};

use crate::config::ManifestWriter;
use crate::{
    resolve_out_dir, BaselineArgs, BuildArgs, EmbedArgs, KernelKind, ManifoldKind, MethodKind,
    ModeKind, SampleArgs, SolveArgs, StrategyKind,
};

fn require(flag: &'static str, value: Option<f64>) -> Result<f64> {
    value.ok_or(VoltError::Config(format!("missing required flag --{flag}")))
}

pub fn manifold_from_args(args: &SampleArgs) -> Result<ManifoldSpec> {
    let spec = match args.manifold {
        ManifoldKind::Interval => ManifoldSpec::Interval {
            lo: require("lo", args.lo)?,
            hi: require("hi", args.hi)?,
        },
        ManifoldKind::UnitSquare => ManifoldSpec::UnitSquare,
        ManifoldKind::Sphere => ManifoldSpec::Sphere {
            dim: args.dim.unwrap_or(3),
        },
        ManifoldKind::SphereSegment => ManifoldSpec::SphereSegment {
            dim: args.dim.unwrap_or(3),
            azimuth_lo: require("azimuth-lo", args.azimuth_lo)?,
            azimuth_hi: require("azimuth-hi", args.azimuth_hi)?,
        },
        ManifoldKind::Disk => {
            let dim = args.dim.unwrap_or(2);
            ManifoldSpec::Disk {
                dim,
                radius: args
                    .radius
                    .unwrap_or_else(|| ManifoldSpec::unit_volume_disk_radius(dim)),
            }
        }
    };
    spec.validate()?;
    Ok(spec)
}

pub fn sample(args: &SampleArgs) -> Result<()> {
    let dir = resolve_out_dir(&args.out_dir)?;
    let spec = manifold_from_args(args)?;
    let cloud = sample_manifold(&spec, args.n, args.seed)?;
    let mut manifest = ManifestWriter::new(
        &dir,
        "sample",
        json!({ "manifold": spec, "n": args.n, "seed": args.seed }),
    );
    io::write_cloud(&dir, "points", &cloud)?;
    manifest.record("points.csv");
    manifest.record("points.json");
    manifest.finish()
}

fn kernel_from_args(
    kind: KernelKind,
    bandwidth: Option<f64>,
    sigma: Option<f64>,
) -> Result<KernelSpec> {
    let kernel = match kind {
        KernelKind::Radial => KernelSpec::Radial {
            bandwidth: require("bandwidth", bandwidth)?,
        },
        KernelKind::Gaussian => KernelSpec::Gaussian {
            sigma: require("sigma", sigma)?,
        },
    };
    kernel.validate()?;
    Ok(kernel)
}

pub fn build(args: &BuildArgs) -> Result<()> {
    let dir = resolve_out_dir(&args.out_dir)?;
    let cloud = io::read_cloud(&args.points)?;
    let kernel = kernel_from_args(args.kernel, args.bandwidth, args.sigma)?;
    let options = BuildOptions {
        gaussian_cutoff: !args.no_cutoff,
    };
    let graph = build_grounded_graph_with(&cloud, &kernel, args.rho_g, options)?;
    let mut manifest = ManifestWriter::new(
        &dir,
        "build",
        json!({
            "points": args.points.display().to_string(),
            "kernel": kernel,
            "rho_g": args.rho_g,
            "gaussian_cutoff": !args.no_cutoff,
        }),
    );
    io::write_graph(&dir, "graph", &graph)?;
    manifest.record("graph.csv");
    manifest.record("graph.json");
    manifest.finish()
}

pub fn load_graph(
    points: &Path,
    edges: &Path,
    graph_meta: &Option<PathBuf>,
) -> Result<GroundedGraph> {
    let cloud = io::read_cloud(points)?;
    let meta = match graph_meta {
        Some(p) => p.clone(),
        None => edges.with_extension("json"),
    };
    io::read_graph(edges, &meta, Some(cloud))
}

fn solver_config(tol: Option<f64>, max_iters: Option<u64>, mode: SolveMode) -> Result<SolverConfig> {
    let mut cfg = SolverConfig {
        mode,
        ..SolverConfig::default()
    };
    if let Some(t) = tol {
        cfg.tol = t;
    }
    if let Some(mi) = max_iters {
        cfg.max_iters = mi;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn solve(args: &SolveArgs) -> Result<()> {
    let dir = resolve_out_dir(&args.out_dir)?;
    let graph = load_graph(&args.points, &args.edges, &args.graph_meta)?;
    let source = select_source(graph.points()?, &args.center.0, args.source_radius)?;
    let mode = match args.mode {
        ModeKind::Full => SolveMode::FullPower,
        ModeKind::Direct => SolveMode::DirectOracle,
        ModeKind::Localized => SolveMode::Localized {
            tau: args
                .tau
                .ok_or(VoltError::Config("--mode localized requires --tau".into()))?,
        },
    };
    let cfg = solver_config(args.tol, args.max_iters, mode)?;
    let (v, report) = solve_voltage(&graph, &source, &cfg)?;
    let mut manifest = ManifestWriter::new(
        &dir,
        "solve",
        json!({
            "points": args.points.display().to_string(),
            "edges": args.edges.display().to_string(),
            "center": args.center.0,
            "source_radius": args.source_radius,
            "tol": cfg.tol,
            "max_iters": cfg.max_iters,
            "mode": format!("{:?}", cfg.mode),
        }),
    );
    io::write_voltage_csv(&dir.join("voltage.csv"), &v.values)?;
    manifest.record("voltage.csv");
    io::write_json(&dir.join("report.json"), &report)?;
    manifest.record("report.json");
    io::write_json(
        &dir.join("source.json"),
        &json!({
            "center": source.center,
            "radius": source.radius,
            "mask": source.mask,
            "support": v.support,
        }),
    )?;
    manifest.record("source.json");
    manifest.finish()?;
    if !report.converged {
        return Err(VoltError::CgNoConvergence {
            iterations: report.iterations as usize,
            residual: report.final_residual,
        });
    }
    Ok(())
}

pub fn baseline(args: &BaselineArgs) -> Result<()> {
    let dir = resolve_out_dir(&args.out_dir)?;
    let graph = load_graph(&args.points, &args.edges, &args.graph_meta)?;
    let cloud = graph.points()?.clone();
    let source = select_source(&cloud, &args.source_center.0, args.source_radius)?;
    let sink = select_source(&cloud, &args.sink_center.0, args.sink_radius)?;
    let mode = match args.method {
        MethodKind::Pm => BaselineMode::Pm,
        MethodKind::RegionEr => BaselineMode::RegionEr,
        MethodKind::DensityEr => BaselineMode::DensityEr,
        MethodKind::Er => BaselineMode::PointEr,
    };
    let spec = SourceSinkSpec::new(&cloud, source, sink, mode)?;
    let mut manifest = ManifestWriter::new(
        &dir,
        "baseline",
        json!({
            "method": format!("{mode:?}"),
            "points": args.points.display().to_string(),
            "edges": args.edges.display().to_string(),
            "source_center": args.source_center.0,
            "source_radius": args.source_radius,
            "sink_center": args.sink_center.0,
            "sink_radius": args.sink_radius,
        }),
    );
    match mode {
        BaselineMode::Pm => {
            let cfg = solver_config(args.tol, args.max_iters, SolveMode::FullPower)?;
            let (v, report) = solve_pm(&graph, &spec, &cfg)?;
            io::write_voltage_csv(&dir.join("voltage.csv"), &v.values)?;
            manifest.record("voltage.csv");
            io::write_json(&dir.join("report.json"), &report)?;
            manifest.record("report.json");
            manifest.finish()?;
            if !report.converged {
                return Err(VoltError::CgNoConvergence {
                    iterations: report.iterations as usize,
                    residual: report.final_residual,
                });
            }
        }
        _ => {
            let v = er_voltage(&graph, &spec)?;
            io::write_voltage_csv(&dir.join("voltage.csv"), &v)?;
            manifest.record("voltage.csv");
            manifest.finish()?;
        }
    }
    Ok(())
}

fn read_subset(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| VoltError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut indices = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let idx: usize = line.parse().map_err(|_| VoltError::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            message: format!("bad node index {line:?}"),
        })?;
        if idx >= n {
            return Err(VoltError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("node index {idx} out of range for n = {n}"),
            });
        }
        indices.push(idx);
    }
    if indices.is_empty() {
        return Err(VoltError::Config("subset file has no indices".into()));
    }
    Ok(indices)
}

pub fn embed(args: &EmbedArgs) -> Result<()> {
    let dir = resolve_out_dir(&args.out_dir)?;
    let graph = load_graph(&args.points, &args.edges, &args.graph_meta)?;
    let cloud = graph.points()?;
    let strategy = match args.strategy {
        StrategyKind::UniformRandom => LandmarkStrategy::UniformRandom,
        StrategyKind::FarthestPoint => LandmarkStrategy::FarthestPoint,
    };
    let mut landmarks = select_landmarks(cloud, args.landmarks, strategy, args.seed)?;
    if let Some(r) = args.source_radius {
        landmarks = landmarks.with_radius(r);
    }
    let cfg = solver_config(args.tol, None, SolveMode::FullPower)?;
    let emb = voltage_embedding(&graph, &landmarks, &cfg)?;

    let mut manifest = ManifestWriter::new(
        &dir,
        "embed",
        json!({
            "points": args.points.display().to_string(),
            "edges": args.edges.display().to_string(),
            "landmarks": args.landmarks,
            "strategy": format!("{strategy:?}"),
            "seed": args.seed,
            "source_radius": args.source_radius,
            "project": args.project,
            "subset": args.subset.as_ref().map(|p| p.display().to_string()),
        }),
    );
    io::write_matrix_csv(&dir.join("embedding.csv"), &emb.z)?;
    manifest.record("embedding.csv");
    io::write_json(&dir.join("landmarks.json"), emb.landmarks.as_ref().unwrap())?;
    manifest.record("landmarks.json");

    if let Some(d) = args.project {
        let (coords, spectrum) = mds_project(&emb, d)?;
        io::write_matrix_csv(&dir.join("projection.csv"), &coords)?;
        manifest.record("projection.csv");
        io::write_curve_dat(
            &dir.join("spectrum.dat"),
            &(1..=spectrum.len()).map(|i| i as f64).collect::<Vec<_>>(),
            &spectrum,
        )?;
        manifest.record("spectrum.dat");
    }

    if let Some(subset_path) = &args.subset {
        let indices = read_subset(subset_path, emb.z.nrows())?;
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| emb.z.row(i).to_vec()).collect();
        let sub_z = Matrix::from_rows(&rows)?;
        io::write_matrix_csv(&dir.join("embedding_subset.csv"), &sub_z)?;
        manifest.record("embedding_subset.csv");
        if let Some(d) = args.project {
            let sub_emb = voltmap::embed::Embedding {
                z: sub_z,
                sources: emb.sources.clone(),
                landmarks: emb.landmarks.clone(),
            };
            let (coords, _) = mds_project(&sub_emb, d)?;
            io::write_matrix_csv(&dir.join("projection_subset.csv"), &coords)?;
            manifest.record("projection_subset.csv");
        }
    }
    manifest.finish()
}
