//! Scripted figure-data recipes: each produces the curve/scatter data for
//! one figure plus a JSON summary of the checks tied to it.

use std::path::Path;

use serde_json::json;

use voltmap::analysis::convergence_study;
use voltmap::baseline::{er_voltage, high_amplitude_fraction, solve_pm, BaselineMode, SourceSinkSpec};
use voltmap::embed::{
    mds_project, procrustes_align, select_landmarks, voltage_embedding, LandmarkSet,
    LandmarkStrategy,
};
use voltmap::graph::{build_grounded_graph, select_source, GroundedGraph};
use voltmap::io;
use voltmap::manifold::{chord_to_angle, sample_manifold, KernelSpec, ManifoldSpec, PointCloud};
use voltmap::matrix::Matrix;
use voltmap::solver::{extend_values, extend_voltage, solve_grounded_emv, SolverConfig};
use voltmap::Result;

use crate::config::ManifestWriter;
use crate::{resolve_out_dir, FigureKind, ReproArgs};

pub fn run(args: &ReproArgs) -> Result<()> {
    let dir = resolve_out_dir(&args.out_dir)?;
    match args.figure {
        FigureKind::FigErCompare => fig_er_compare(&dir),
        FigureKind::FigVoltageGrounded => fig_voltage_grounded(&dir),
        FigureKind::FigSphereEmbedding => fig_sphere_embedding(&dir),
    }
}

/// Scatter field file: one `x y value` row per node.
fn write_field(path: &Path, cloud: &PointCloud, values: &[f64]) -> Result<()> {
    let mut out = String::new();
    for (i, &v) in values.iter().enumerate() {
        for &c in cloud.point(i) {
            out.push_str(&io::fmt_f64(c));
            out.push(' ');
        }
        out.push_str(&io::fmt_f64(v));
        out.push('\n');
    }
    io::atomic_write(path, out.as_bytes())
}

fn unit_square_grid(side: usize) -> Matrix {
    let mut rows = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            rows.push(vec![
                (i as f64 + 0.5) / side as f64,
                (j as f64 + 0.5) / side as f64,
            ]);
        }
    }
    Matrix::from_rows(&rows).unwrap()
}

fn normalized(values: &[f64]) -> Vec<f64> {
    let max = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max == 0.0 {
        values.to_vec()
    } else {
        values.iter().map(|&v| v / max).collect()
    }
}

fn grid_sup_diff(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .filter_map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some((x - y).abs()),
            _ => None,
        })
        .fold(0.0f64, f64::max)
}

/// Four source-to-sink fields at two sample sizes on the unit square:
/// the point-source field collapses as n grows, the region fields do not.
fn fig_er_compare(dir: &Path) -> Result<()> {
    let kernel = KernelSpec::Radial { bandwidth: 0.05 };
    let ns = [1usize << 11, 1 << 15];
    let methods = [
        ("pm", BaselineMode::Pm),
        ("region_er", BaselineMode::RegionEr),
        ("density_er", BaselineMode::DensityEr),
        ("er", BaselineMode::PointEr),
    ];
    let mut manifest = ManifestWriter::new(
        dir,
        "repro fig-er-compare",
        json!({
            "kernel": kernel,
            "n": ns,
            "source": { "center": [0.1, 0.1], "radius": 0.1 },
            "sink": { "center": [0.7, 0.7], "radius": 0.1 },
            "seed": 101,
        }),
    );
    let grid = unit_square_grid(50);
    let pm_cfg = SolverConfig {
        tol: 1e-8,
        ..SolverConfig::default()
    };

    let mut fracs = Vec::new();
    let mut grids: Vec<Vec<(String, Vec<Option<f64>>)>> = Vec::new();
    for &n in &ns {
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, n, 101)?;
        let graph = build_grounded_graph(&cloud, &kernel, 0.0)?;
        let source = select_source(&cloud, &[0.1, 0.1], 0.1)?;
        let sink = select_source(&cloud, &[0.7, 0.7], 0.1)?;
        let mut per_n = Vec::new();
        for (name, mode) in methods {
            let spec = SourceSinkSpec::new(&cloud, source.clone(), sink.clone(), mode)?;
            let values = match mode {
                BaselineMode::Pm => solve_pm(&graph, &spec, &pm_cfg)?.0.values,
                _ => er_voltage(&graph, &spec)?,
            };
            let file = format!("{name}_n{n}.dat");
            write_field(&dir.join(&file), &cloud, &values)?;
            manifest.record(file);
            if mode == BaselineMode::PointEr {
                fracs.push(high_amplitude_fraction(&values, 0.1));
            }
            if matches!(mode, BaselineMode::Pm | BaselineMode::RegionEr | BaselineMode::PointEr) {
                per_n.push((
                    name.to_string(),
                    extend_values(&graph, &normalized(&values), &grid)?,
                ));
            }
        }
        grids.push(per_n);
    }

    // Stabilization between the two sample sizes, per method.
    let mut sup_diffs = serde_json::Map::new();
    for m in 0..grids[0].len() {
        let name = grids[0][m].0.clone();
        sup_diffs.insert(
            name,
            json!(grid_sup_diff(&grids[0][m].1, &grids[1][m].1)),
        );
    }
    let point_diff = sup_diffs["er"].as_f64().unwrap();
    let region_diff = sup_diffs["region_er"].as_f64().unwrap();
    io::write_json(
        &dir.join("summary.json"),
        &json!({
            "point_er_high_amplitude_fraction": { "n2048": fracs[0], "n32768": fracs[1] },
            "point_er_fraction_decreases": fracs[1] < fracs[0],
            "normalized_grid_sup_diff": sup_diffs,
            "region_stabilizes_better_than_point": region_diff < point_diff,
        }),
    )?;
    manifest.record("summary.json");
    manifest.finish()
}

/// Grounded voltage on the line and the unit square across sample sizes
/// and two ground regimes.
fn fig_voltage_grounded(dir: &Path) -> Result<()> {
    let kernel = KernelSpec::Radial { bandwidth: 0.05 };
    let ns = [1usize << 11, 1 << 13, 1 << 15];
    let line = ManifoldSpec::Interval { lo: 0.0, hi: 3.0 };
    // Kernel window mass on the line is 2r/3; the two regimes sit a factor
    // of thirty apart around it.
    let rho_fast = 0.1;
    let rho_slow = 0.1 / 30.0;
    let seed = 1u64;
    let seeds = [1u64, 2, 3, 4, 5];
    let cfg = SolverConfig::default();
    let mut manifest = ManifestWriter::new(
        dir,
        "repro fig-voltage-grounded",
        json!({
            "kernel": kernel,
            "n": ns,
            "line_source": { "center": [2.5], "radius": 0.5 },
            "square_source": { "center": [0.1, 0.1], "radius": 0.1 },
            "rho": { "fast": rho_fast, "slow": rho_slow },
            "curve_seed": seed,
            "summary_seeds": seeds,
        }),
    );

    for &n in &ns {
        let cloud = sample_manifold(&line, n, seed)?;
        let graph = build_grounded_graph(&cloud, &kernel, rho_fast)?;
        let source = select_source(&cloud, &[2.5], 0.5)?;
        for (label, rho) in [("fast", rho_fast), ("slow", rho_slow)] {
            let g = graph.with_rho(rho);
            let (v, _) = solve_grounded_emv(&g, &source, &cfg)?;
            // Node scatter sorted by position.
            let mut order: Vec<usize> = (0..cloud.n()).collect();
            order.sort_by(|&a, &b| cloud.point(a)[0].partial_cmp(&cloud.point(b)[0]).unwrap());
            let xs: Vec<f64> = order.iter().map(|&i| cloud.point(i)[0]).collect();
            let vs: Vec<f64> = order.iter().map(|&i| v.values[i]).collect();
            let file = format!("line_rho_{label}_n{n}.dat");
            io::write_curve_dat(&dir.join(&file), &xs, &vs)?;
            manifest.record(file);
        }
    }

    // Square: source in the corner region, fast ground, profile along the
    // main diagonal.
    let a_square = std::f64::consts::PI * 0.05 * 0.05;
    let rho_square = 3.0 * a_square;
    let diag_rows: Vec<Vec<f64>> = (0..200)
        .map(|i| {
            let t = (i as f64 + 0.5) / 200.0;
            vec![t, t]
        })
        .collect();
    let diag = Matrix::from_rows(&diag_rows)?;
    for &n in &ns {
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, n, seed)?;
        let graph = build_grounded_graph(&cloud, &kernel, rho_square)?;
        let source = select_source(&cloud, &[0.1, 0.1], 0.1)?;
        let (v, _) = solve_grounded_emv(&graph, &source, &cfg)?;
        let ext = extend_voltage(&graph, &v, &diag)?;
        let ts: Vec<f64> = diag.rows().map(|r| r[0]).collect();
        let vs: Vec<f64> = ext.iter().map(|o| o.unwrap_or(f64::NAN)).collect();
        let file = format!("square_diag_n{n}.dat");
        io::write_curve_dat(&dir.join(&file), &ts, &vs)?;
        manifest.record(file);
    }

    // Convergence summary: median sup-differences over seeds on a fixed
    // 50-point grid, per ground regime.
    let grid_rows: Vec<Vec<f64>> = (0..50).map(|i| vec![3.0 * (i as f64 + 0.5) / 50.0]).collect();
    let line_grid = Matrix::from_rows(&grid_rows)?;
    let mut sup = serde_json::Map::new();
    for (label, rho) in [("fast", rho_fast), ("slow", rho_slow)] {
        let report = convergence_study(
            &line,
            &kernel,
            rho,
            &[2.5],
            0.5,
            &ns,
            &line_grid,
            &seeds,
            &cfg,
        )?;
        let decreasing = report.median_sup.windows(2).all(|w| w[1] < w[0]);
        sup.insert(
            label.to_string(),
            json!({
                "median_sup_diffs": report.median_sup,
                "strictly_decreasing": decreasing,
            }),
        );
    }
    io::write_json(&dir.join("summary.json"), &json!({ "line_convergence": sup }))?;
    manifest.record("summary.json");
    manifest.finish()
}

/// Landmark embeddings of the two-quadrant sphere segment at m = 3,5,7,9.
fn fig_sphere_embedding(dir: &Path) -> Result<()> {
    let spec = ManifoldSpec::SphereSegment {
        dim: 3,
        azimuth_lo: 0.0,
        azimuth_hi: std::f64::consts::PI,
    };
    let n = 1 << 13;
    let r = 0.3;
    let phi = chord_to_angle(r)?;
    let a = 1.0 - phi.cos();
    let rho = 0.05 * a;
    let seed = 1u64;
    let ms = [3usize, 5, 7, 9];
    let mut manifest = ManifestWriter::new(
        dir,
        "repro fig-sphere-embedding",
        json!({
            "manifold": spec,
            "n": n,
            "kernel": { "kind": "radial", "bandwidth": r },
            "rho_g": rho,
            "m": ms,
            "seed": seed,
        }),
    );

    let cloud = sample_manifold(&spec, n, seed)?;
    io::write_cloud(dir, "points", &cloud)?;
    manifest.record("points.csv");
    manifest.record("points.json");
    let graph: GroundedGraph =
        build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: r }, rho)?;
    let all = select_landmarks(&cloud, 9, LandmarkStrategy::UniformRandom, seed)?;

    let mut errors = Vec::new();
    for &m in &ms {
        let lm = LandmarkSet {
            indices: all.indices[..m].to_vec(),
            radius: Some(r),
            strategy: all.strategy,
            seed,
        };
        let emb = voltage_embedding(&graph, &lm, &SolverConfig::default())?;
        let (coords, _) = mds_project(&emb, 3)?;
        let (aligned, err) = procrustes_align(&coords, cloud.points())?;
        errors.push(err);
        let pfile = format!("projection_m{m}.csv");
        io::write_matrix_csv(&dir.join(&pfile), &coords)?;
        manifest.record(pfile);
        let afile = format!("aligned_m{m}.csv");
        io::write_matrix_csv(&dir.join(&afile), &aligned)?;
        manifest.record(afile);
    }
    let m_axis: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    io::write_curve_dat(&dir.join("procrustes_errors.dat"), &m_axis, &errors)?;
    manifest.record("procrustes_errors.dat");
    let non_increasing = errors.windows(2).all(|w| w[1] <= w[0]);
    io::write_json(
        &dir.join("summary.json"),
        &json!({
            "m": ms,
            "procrustes_errors": errors,
            "non_increasing": non_increasing,
        }),
    )?;
    manifest.record("summary.json");
    manifest.finish()
}
