//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured numbers (run with `--nocapture` to see them).
//!
//! Micro-oracles are exact; the statistical criteria use fixed seeds,
//! medians over seeds, and three-standard-error slack.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voltmap::analysis::{
    check_monotone, convergence_study, median, radial_profile, support_radius,
    theoretical_bounds, Geometry,
};
use voltmap::baseline::{
    er_voltage, high_amplitude_fraction, solve_pm, BaselineMode, SourceSinkSpec,
};
use voltmap::embed::{
    check_injectivity, embedding_from_sources, mds_project, procrustes_align, select_landmarks,
    voltage_embedding, LandmarkSet, LandmarkStrategy,
};
use voltmap::graph::{build_grounded_graph, select_source, GroundedGraph, SourceRegion};
use voltmap::manifold::{
    ball_volume, chord_to_angle, sample_manifold, KernelSpec, ManifoldSpec, PointCloud,
};
use voltmap::matrix::Matrix;
use voltmap::solver::{
    contraction_bound, extend_values, solve_direct_oracle, solve_grounded_emv, SolveReport,
    SolverConfig,
};

const ORACLE_SUITE_SEED: u64 = 0xACCE57;
const ORACLE_SUITE_SIZE: usize = 50;

struct OracleRun {
    linf: f64,
    report: SolveReport,
    bound: f64,
    rho: f64,
    max_degree: f64,
}

/// Shared instance set for criteria 1 and 3: random geometric graphs with
/// n <= 500, radial kernel, rho_g in [0.1, 10].
fn run_oracle_suite(cfg: &SolverConfig) -> Vec<OracleRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_SUITE_SEED);
    let mut runs = Vec::with_capacity(ORACLE_SUITE_SIZE);
    for _ in 0..ORACLE_SUITE_SIZE {
        let n = rng.random_range(60..=500);
        let r = 0.08 + 0.17 * rng.random::<f64>();
        let rho_g = 0.1 + 9.9 * rng.random::<f64>();
        let cloud_seed: u64 = rng.random();
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, n, cloud_seed).unwrap();
        let graph =
            build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: r }, rho_g).unwrap();
        let source = loop {
            let center = [rng.random::<f64>(), rng.random::<f64>()];
            let radius = 0.05 + 0.15 * rng.random::<f64>();
            if let Ok(s) = select_source(&cloud, &center, radius) {
                break s;
            }
        };
        let (v, report) = solve_grounded_emv(&graph, &source, cfg).unwrap();
        assert!(report.converged);
        let oracle = solve_direct_oracle(&graph, &source).unwrap();
        let linf = v
            .values
            .iter()
            .zip(&oracle.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        for (i, &x) in v.values.iter().enumerate() {
            assert!((0.0..=1.0).contains(&x), "maximum principle at node {i}");
        }
        runs.push(OracleRun {
            linf,
            report,
            bound: contraction_bound(&graph),
            rho: graph.rho(),
            max_degree: graph.max_degree(),
        });
    }
    runs
}

#[test]
fn criterion_01_oracle_equivalence() {
    let start = Instant::now();
    let runs = run_oracle_suite(&SolverConfig::default());
    let worst = runs.iter().map(|r| r.linf).fold(0.0f64, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst <= 1e-9, "worst lmax disagreement {worst:.3e}");
    assert!(elapsed < 30.0, "suite took {elapsed:.1}s (budget 30s)");
    println!(
        "criterion 01 (oracle equivalence): PASS - {} graphs, worst lmax {worst:.3e}, {elapsed:.1}s",
        runs.len()
    );
}

#[test]
fn criterion_02_closed_form_fixtures() {
    let start = Instant::now();
    let tight = SolverConfig {
        tol: 1e-13,
        ..SolverConfig::default()
    };

    let cloud2 = PointCloud::from_points(
        Matrix::from_rows(&[vec![0.0], vec![0.01]]).unwrap(),
    );
    let g2 = build_grounded_graph(&cloud2, &KernelSpec::Radial { bandwidth: 0.05 }, 1.0).unwrap();
    let s2 = select_source(g2.points().unwrap(), &[0.0], 0.0).unwrap();
    let (v2, _) = solve_grounded_emv(&g2, &s2, &tight).unwrap();
    let o2 = solve_direct_oracle(&g2, &s2).unwrap();
    let err2 = (v2.values[1] - 1.0 / 3.0)
        .abs()
        .max((o2.values[1] - 1.0 / 3.0).abs());
    assert!(err2 <= 1e-12, "two-node fixture error {err2:.3e}");

    let cloud3 = PointCloud::from_points(
        Matrix::from_rows(&[vec![0.0], vec![0.04], vec![0.08]]).unwrap(),
    );
    let g3 = build_grounded_graph(&cloud3, &KernelSpec::Radial { bandwidth: 0.05 }, 1.0).unwrap();
    let s3 = select_source(g3.points().unwrap(), &[0.0], 0.0).unwrap();
    let (v3, _) = solve_grounded_emv(&g3, &s3, &tight).unwrap();
    let o3 = solve_direct_oracle(&g3, &s3).unwrap();
    let err3 = [
        v3.values[1] - 4.0 / 19.0,
        v3.values[2] - 1.0 / 19.0,
        o3.values[1] - 4.0 / 19.0,
        o3.values[2] - 1.0 / 19.0,
    ]
    .iter()
    .map(|d| d.abs())
    .fold(0.0f64, f64::max);
    assert!(err3 <= 1e-12, "path fixture error {err3:.3e}");

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0);
    println!(
        "criterion 02 (closed-form fixtures): PASS - errors {err2:.2e} / {err3:.2e}, {elapsed:.2}s"
    );
}

#[test]
fn criterion_03_contraction_certificate() {
    let cfg = SolverConfig::default();
    let runs = run_oracle_suite(&cfg);
    let mut worst_excess = f64::NEG_INFINITY;
    for run in &runs {
        // The ratio bound holds in exact arithmetic; residuals near the
        // 1e-10 stopping level carry ~1e-6 relative rounding, hence the
        // multiplicative slack.
        let slack = run.bound * 1e-5;
        assert!(
            run.report.contraction_ratio_observed <= run.bound + slack,
            "ratio {} exceeds bound {}",
            run.report.contraction_ratio_observed,
            run.bound
        );
        worst_excess = worst_excess.max(run.report.contraction_ratio_observed - run.bound);

        let iter_bound = (1.0 / cfg.tol).ln() / (1.0 + run.rho / run.max_degree).ln() + 2.0;
        assert!(
            (run.report.iterations as f64) <= iter_bound,
            "iterations {} exceed bound {iter_bound:.1}",
            run.report.iterations
        );
    }
    println!(
        "criterion 03 (contraction certificate): PASS - {} solves, worst ratio-bound excess {worst_excess:.2e}",
        runs.len()
    );
}

#[test]
fn criterion_04_maximum_principle() {
    // Grounded solves on three geometries plus a pinned PM solve; every
    // voltage output must stay inside [0, 1] with sources exactly 1.
    let mut checked = 0usize;
    let cfg = SolverConfig::default();

    let line = sample_manifold(&ManifoldSpec::Interval { lo: 0.0, hi: 3.0 }, 2048, 3).unwrap();
    let g_line =
        build_grounded_graph(&line, &KernelSpec::Radial { bandwidth: 0.05 }, 0.02).unwrap();
    let s_line = select_source(&line, &[2.5], 0.5).unwrap();
    let (v_line, _) = solve_grounded_emv(&g_line, &s_line, &cfg).unwrap();

    let sphere = sample_manifold(&ManifoldSpec::Sphere { dim: 3 }, 2048, 4).unwrap();
    let g_sph = build_grounded_graph(&sphere, &KernelSpec::Radial { bandwidth: 0.2 }, 0.01).unwrap();
    let s_sph = select_source(&sphere, &[1.0, 0.0, 0.0], 0.2).unwrap();
    let (v_sph, _) = solve_grounded_emv(&g_sph, &s_sph, &cfg).unwrap();

    let square = sample_manifold(&ManifoldSpec::UnitSquare, 2048, 5).unwrap();
    let g_sq = build_grounded_graph(&square, &KernelSpec::Radial { bandwidth: 0.05 }, 0.008).unwrap();
    let src = select_source(&square, &[0.1, 0.1], 0.1).unwrap();
    let sink = select_source(&square, &[0.7, 0.7], 0.1).unwrap();
    let spec = SourceSinkSpec::new(&square, src.clone(), sink, BaselineMode::Pm).unwrap();
    let (v_pm, _) = solve_pm(&g_sq, &spec, &cfg).unwrap();

    for (v, source) in [
        (&v_line, &s_line),
        (&v_sph, &s_sph),
        (&v_pm, &src),
    ] {
        for (i, &x) in v.values.iter().enumerate() {
            assert!((0.0..=1.0).contains(&x), "value {x} at node {i}");
            checked += 1;
        }
        for &i in &source.mask {
            assert_eq!(v.values[i], 1.0, "source node {i} not pinned to 1");
        }
    }
    println!("criterion 04 (maximum principle): PASS - {checked} values in [0,1], sources exact");
}

#[test]
fn criterion_05_convergence_in_n() {
    let start = Instant::now();
    let grid_rows: Vec<Vec<f64>> = (0..50).map(|i| vec![3.0 * (i as f64 + 0.5) / 50.0]).collect();
    let grid = Matrix::from_rows(&grid_rows).unwrap();
    let report = convergence_study(
        &ManifoldSpec::Interval { lo: 0.0, hi: 3.0 },
        &KernelSpec::Radial { bandwidth: 0.05 },
        0.01,
        &[2.5],
        0.5,
        &[1 << 11, 1 << 13, 1 << 15],
        &grid,
        &[1, 2, 3, 4, 5],
        &SolverConfig::default(),
    )
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(report.median_sup.len(), 2);
    assert!(
        report.median_sup[0] > report.median_sup[1],
        "median sup-differences not decreasing: {:?}",
        report.median_sup
    );
    assert!(elapsed < 300.0, "took {elapsed:.0}s (budget 300s)");
    println!(
        "criterion 05 (convergence in n): PASS - median sup diffs {:.4e} > {:.4e}, {elapsed:.0}s",
        report.median_sup[0], report.median_sup[1]
    );
}

/// Disk-geometry experiment shared by criteria 6 and 7: unit-area disk,
/// radial kernel r = 0.05, ground weight equal to the kernel-ball mass.
struct DiskRun {
    cloud: PointCloud,
    graph: GroundedGraph,
    source: SourceRegion,
    profile: voltmap::analysis::RadialProfile,
}

fn disk_run(r: f64, rho: f64, n: usize, seed: u64, n_bins: usize) -> DiskRun {
    let spec = ManifoldSpec::Disk {
        dim: 2,
        radius: ManifoldSpec::unit_volume_disk_radius(2),
    };
    let cloud = sample_manifold(&spec, n, seed).unwrap();
    let graph = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: r }, rho).unwrap();
    let source = select_source(&cloud, &[0.0, 0.0], r).unwrap();
    let (v, _) = solve_grounded_emv(&graph, &source, &SolverConfig::default()).unwrap();
    let profile = radial_profile(&cloud, &v, &[0.0, 0.0], n_bins).unwrap();
    DiskRun {
        cloud,
        graph,
        source,
        profile,
    }
}

#[test]
fn criterion_06_decay_envelopes() {
    let start = Instant::now();
    let r = 0.05;
    let a = ball_volume(2, r);
    let rho = a; // rho / a = 1
    let bounds = theoretical_bounds(r, rho, Geometry::Disk { dim: 2 }, r).unwrap();
    for seed in [1u64, 2, 3] {
        let run = disk_run(r, rho, 1 << 13, seed, 45);
        let profile = &run.profile;
        for t in 1..=5u32 {
            let z = t as f64 * bounds.step;
            let b = ((z / profile.bin_edges.last().unwrap() * profile.n_bins() as f64) as usize)
                .min(profile.n_bins() - 1);
            assert!(profile.bin_count[b] > 0, "empty bin at t = {t}");
            let h = profile.bin_mean[b];
            let se = profile.bin_stderr(b);
            let lower = bounds.lower_envelope_conservative(t);
            assert!(
                h >= lower - 3.0 * se,
                "seed {seed} t {t}: h {h:.4e} below lower envelope {lower:.4e} - 3se"
            );
            if bounds.upper_applies_at(z) {
                let upper = bounds.upper_envelope(t);
                assert!(
                    h <= upper + 3.0 * se,
                    "seed {seed} t {t}: h {h:.4e} above upper envelope {upper:.4e} + 3se"
                );
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 180.0, "took {elapsed:.0}s (budget 180s)");
    println!(
        "criterion 06 (decay envelopes): PASS - 3 seeds x t=1..5 inside envelopes, {elapsed:.0}s"
    );
}

#[test]
fn criterion_07_support_radius() {
    let start = Instant::now();
    let r = 0.05;
    let a = ball_volume(2, r);
    let tau = 0.01;
    let bounds = theoretical_bounds(r, a, Geometry::Disk { dim: 2 }, r).unwrap();
    let mut reported = Vec::new();
    for seed in [1u64, 2, 3] {
        let run = disk_run(r, a, 1 << 13, seed, 45);
        let report = support_radius(&run.profile, tau, &bounds).unwrap();
        let bw = run.profile.bin_width();
        assert!(!report.degenerate);
        assert!(
            report.r_supp_empirical >= report.r_l - bw
                && report.r_supp_empirical <= report.r_u + bw,
            "seed {seed}: r_supp {:.4} outside [{:.4}, {:.4}] +- binwidth {bw:.4}",
            report.r_supp_empirical,
            report.r_l,
            report.r_u
        );
        reported.push(report.r_supp_empirical);

        // Increasing the ground weight must strictly shrink the support on
        // the same cloud.
        let mut sweep = Vec::new();
        for rho in [0.5 * a, a, 2.0 * a] {
            let g = run.graph.with_rho(rho);
            let (v, _) = solve_grounded_emv(&g, &run.source, &SolverConfig::default()).unwrap();
            let p = radial_profile(&run.cloud, &v, &[0.0, 0.0], 45).unwrap();
            let b = theoretical_bounds(r, rho, Geometry::Disk { dim: 2 }, r).unwrap();
            sweep.push(support_radius(&p, tau, &b).unwrap().r_supp_empirical);
        }
        assert!(
            sweep[0] > sweep[1] && sweep[1] > sweep[2],
            "seed {seed}: rho sweep not strictly decreasing: {sweep:?}"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 07 (support radius): PASS - r_supp {reported:?} in window, rho sweep strict, {elapsed:.0}s"
    );
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

/// Sup-difference of two optional-valued grids over jointly defined cells.
fn grid_sup_diff(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .filter_map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some((x - y).abs()),
            _ => None,
        })
        .fold(0.0f64, f64::max)
}

fn normalized(values: &[f64]) -> Vec<f64> {
    let max = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max == 0.0 {
        values.to_vec()
    } else {
        values.iter().map(|&v| v / max).collect()
    }
}

#[test]
fn criterion_08_er_trivial_limit() {
    let start = Instant::now();
    let grid = unit_square_grid(50);
    let kernel = KernelSpec::Radial { bandwidth: 0.05 };
    // Field differences between sample sizes are ~1e-2; 1e-8 stopping is
    // far below the measurement scale.
    let cfg = SolverConfig {
        tol: 1e-8,
        ..SolverConfig::default()
    };

    let mut point_fracs = Vec::new();
    let mut point_grids = Vec::new();
    let mut region_grids = Vec::new();
    let mut pm_grids = Vec::new();
    for exp in [11u32, 13, 15] {
        let n = 1usize << exp;
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, n, 77).unwrap();
        let graph = build_grounded_graph(&cloud, &kernel, 0.0).unwrap();
        let source = select_source(&cloud, &[0.1, 0.1], 0.1).unwrap();
        let sink = select_source(&cloud, &[0.7, 0.7], 0.1).unwrap();

        let point_spec =
            SourceSinkSpec::new(&cloud, source.clone(), sink.clone(), BaselineMode::PointEr)
                .unwrap();
        let v_point = er_voltage(&graph, &point_spec).unwrap();
        point_fracs.push(high_amplitude_fraction(&v_point, 0.1));
        point_grids.push(extend_values(&graph, &normalized(&v_point), &grid).unwrap());

        let region_spec =
            SourceSinkSpec::new(&cloud, source.clone(), sink.clone(), BaselineMode::RegionEr)
                .unwrap();
        let v_region = er_voltage(&graph, &region_spec).unwrap();
        region_grids.push(extend_values(&graph, &normalized(&v_region), &grid).unwrap());

        let pm_spec =
            SourceSinkSpec::new(&cloud, source.clone(), sink.clone(), BaselineMode::Pm).unwrap();
        let (v_pm, _) = solve_pm(&graph, &pm_spec, &cfg).unwrap();
        pm_grids.push(extend_values(&graph, &normalized(&v_pm.values), &grid).unwrap());
    }

    assert!(
        point_fracs[0] > point_fracs[1] && point_fracs[1] > point_fracs[2],
        "point-ER high-amplitude fraction not strictly decreasing: {point_fracs:?}"
    );
    let region_diffs = [
        grid_sup_diff(&region_grids[0], &region_grids[1]),
        grid_sup_diff(&region_grids[1], &region_grids[2]),
    ];
    assert!(
        region_diffs[0] > region_diffs[1],
        "RegionER grid profiles not stabilizing: {region_diffs:?}"
    );
    let pm_diffs = [
        grid_sup_diff(&pm_grids[0], &pm_grids[1]),
        grid_sup_diff(&pm_grids[1], &pm_grids[2]),
    ];
    assert!(
        pm_diffs[0] > pm_diffs[1],
        "PM grid profiles not stabilizing: {pm_diffs:?}"
    );
    // Region sources beat a point source at the same pair of sizes: the
    // normalized profiles drift less.
    let point_pair_diff = grid_sup_diff(&point_grids[0], &point_grids[1]);
    let region_pair_diff = grid_sup_diff(&region_grids[0], &region_grids[1]);
    assert!(
        region_pair_diff < point_pair_diff,
        "region profile drift {region_pair_diff} not below point drift {point_pair_diff}"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "took {elapsed:.0}s (budget 600s)");
    println!(
        "criterion 08 (ER trivial limit): PASS - point fracs {point_fracs:?}, region diffs {region_diffs:?}, pm diffs {pm_diffs:?}, {elapsed:.0}s"
    );
}

#[test]
fn criterion_09_injectivity() {
    let start = Instant::now();
    let r = 0.1;
    let n = 1 << 13;
    let cloud = sample_manifold(&ManifoldSpec::Sphere { dim: 3 }, n, 21).unwrap();
    let phi = chord_to_angle(r).unwrap();
    let a = (1.0 - phi.cos()) / 2.0; // kernel cap mass on S^2
    let graph = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: r }, a).unwrap();
    let sources: Vec<SourceRegion> = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ]
    .iter()
    .map(|c| select_source(&cloud, c, r).unwrap())
    .collect();
    let emb = embedding_from_sources(&graph, &sources, &SolverConfig::default()).unwrap();
    let epsilon = phi * 3.0f64.sqrt();
    let report = check_injectivity(&emb, &cloud, epsilon, 0.0, 100_000, 5).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        report.violations.is_empty(),
        "{} collisions among {} far pairs",
        report.violations.len(),
        report.far_pairs
    );
    assert!(elapsed < 120.0, "took {elapsed:.0}s (budget 120s)");
    println!(
        "criterion 09 (injectivity): PASS - 0 violations over {} pairs ({} far), min margin {:.3e}, {elapsed:.0}s",
        report.pairs_tested,
        report.far_pairs,
        report.min_margin.unwrap()
    );
}

#[test]
fn criterion_10_embedding_quality_trend() {
    let start = Instant::now();
    let spec = ManifoldSpec::SphereSegment {
        dim: 3,
        azimuth_lo: 0.0,
        azimuth_hi: std::f64::consts::PI,
    };
    let n = 1 << 13;
    let r = 0.3;
    let phi = chord_to_angle(r).unwrap();
    // Kernel cap mass relative to the half sphere; a weak ground keeps the
    // voltages informative across the whole segment.
    let a = 1.0 - phi.cos();
    let rho = 0.05 * a;
    let kernel = KernelSpec::Radial { bandwidth: r };
    let cfg = SolverConfig::default();
    let ms = [3usize, 5, 7, 9];

    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); ms.len()];
    for seed in [1u64, 2, 3, 4, 5] {
        let cloud = sample_manifold(&spec, n, seed).unwrap();
        let graph = build_grounded_graph(&cloud, &kernel, rho).unwrap();
        // One draw of 9 landmarks per seed; prefixes give nested sets so
        // growing m strictly adds information.
        let all = select_landmarks(&cloud, 9, LandmarkStrategy::UniformRandom, seed).unwrap();
        for (mi, &m) in ms.iter().enumerate() {
            let lm = LandmarkSet {
                indices: all.indices[..m].to_vec(),
                radius: Some(r),
                strategy: all.strategy,
                seed,
            };
            let emb = voltage_embedding(&graph, &lm, &cfg).unwrap();
            let (coords, _) = mds_project(&emb, 3).unwrap();
            let (_, err) = procrustes_align(&coords, cloud.points()).unwrap();
            errors[mi].push(err);
        }
    }
    let medians: Vec<f64> = errors
        .iter()
        .map(|e| median(e.iter().copied()))
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    for w in medians.windows(2) {
        assert!(
            w[1] <= w[0],
            "median alignment error increased along m = 3,5,7,9: {medians:?}"
        );
    }
    assert!(elapsed < 600.0, "took {elapsed:.0}s (budget 600s)");
    println!(
        "criterion 10 (embedding quality trend): PASS - median errors {medians:?} non-increasing, {elapsed:.0}s"
    );
}

#[test]
fn criterion_06_07_sanity_monotone_profile() {
    // Companion check: the disk profile itself is monotone beyond the
    // source within statistical slack, which the envelope criteria assume.
    let r = 0.05;
    let a = ball_volume(2, r);
    let run = disk_run(r, a, 1 << 13, 1, 45);
    let max_se = (0..run.profile.n_bins())
        .filter(|&b| run.profile.bin_count[b] > 0)
        .map(|b| run.profile.bin_stderr(b))
        .fold(0.0f64, f64::max);
    let report = check_monotone(&run.profile, 2.0 * max_se);
    assert!(report.ok, "violations: {:?}", report.violations);
    println!("criterion 06/07 companion (monotone profile): PASS");
}
