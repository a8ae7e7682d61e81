//! Landmark voltage embeddings.
//!
//! Each landmark pins a small ball to potential 1 and contributes one
//! column: the solved voltage. Columns are independent solves over the same
//! immutable graph, so they parallelize trivially and the stacked matrix is
//! identical whatever the execution order. A centered SVD projects the
//! columns down for visualization, orthogonal Procrustes aligns a
//! projection against reference coordinates, and a sampled checker verifies
//! that far-apart points never collide in embedding space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{select_source, GroundedGraph, SourceRegion};
use crate::manifold::{KernelSpec, PointCloud};
use crate::matrix::{euclidean, Matrix};
use crate::solver::{solve, SolverConfig, VoltageFunction};
use crate::{Result, VoltError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkStrategy {
    /// Distinct node indices drawn without replacement.
    UniformRandom,
    /// Greedy max-min ambient distance, seeded by a random first pick.
    FarthestPoint,
}

/// Landmark centers (as node indices) plus the shared source radius.
/// `radius: None` defers to the kernel bandwidth at embedding time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub indices: Vec<usize>,
    pub radius: Option<f64>,
    pub strategy: LandmarkStrategy,
    pub seed: u64,
}

impl LandmarkSet {
    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = Some(radius);
        self
    }
}

pub fn select_landmarks(
    cloud: &PointCloud,
    m: usize,
    strategy: LandmarkStrategy,
    seed: u64,
) -> Result<LandmarkSet> {
    let n = cloud.n();
    if m == 0 || m > n {
        return Err(VoltError::InvalidSpec {
            field: "landmarks.m",
            message: format!("need 1 <= m <= n = {n}, got {m}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = match strategy {
        LandmarkStrategy::UniformRandom => rand::seq::index::sample(&mut rng, n, m).into_vec(),
        LandmarkStrategy::FarthestPoint => {
            let first = rng.random_range(0..n);
            let mut chosen = vec![first];
            let mut min_dist: Vec<f64> = (0..n)
                .map(|i| euclidean(cloud.point(i), cloud.point(first)))
                .collect();
            while chosen.len() < m {
                let mut best = 0;
                let mut best_d = -1.0;
                for (i, &d) in min_dist.iter().enumerate() {
                    if d > best_d {
                        best_d = d;
                        best = i;
                    }
                }
                chosen.push(best);
                for i in 0..n {
                    let d = euclidean(cloud.point(i), cloud.point(best));
                    if d < min_dist[i] {
                        min_dist[i] = d;
                    }
                }
            }
            chosen
        }
    };
    Ok(LandmarkSet {
        indices,
        radius: None,
        strategy,
        seed,
    })
}

/// The landmark-voltage matrix: row per node, column per landmark.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub z: Matrix,
    pub sources: Vec<SourceRegion>,
    pub landmarks: Option<LandmarkSet>,
}

/// Solve one voltage function per source region and stack them as columns.
/// Solves run in parallel; results are independent of execution order.
pub fn embedding_from_sources(
    graph: &GroundedGraph,
    sources: &[SourceRegion],
    cfg: &SolverConfig,
) -> Result<Embedding> {
    let columns: Vec<VoltageFunction> = sources
        .par_iter()
        .enumerate()
        .map(|(idx, src)| {
            solve(graph, src, cfg)
                .map(|(v, _)| v)
                .map_err(|e| VoltError::Landmark {
                    index: idx,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = graph.n();
    let m = sources.len();
    let mut z = Matrix::zeros(n, m);
    for (c, v) in columns.iter().enumerate() {
        for i in 0..n {
            z.set(i, c, v.values[i]);
        }
    }
    Ok(Embedding {
        z,
        sources: sources.to_vec(),
        landmarks: None,
    })
}

/// Embedding with sources centered on landmark nodes; the source radius
/// defaults to the kernel bandwidth.
pub fn voltage_embedding(
    graph: &GroundedGraph,
    landmarks: &LandmarkSet,
    cfg: &SolverConfig,
) -> Result<Embedding> {
    let cloud = graph.points()?;
    let radius = match landmarks.radius {
        Some(r) => r,
        None => match graph.kernel()? {
            KernelSpec::Radial { bandwidth } => *bandwidth,
            KernelSpec::Gaussian { sigma } => *sigma,
        },
    };
    let sources: Vec<SourceRegion> = landmarks
        .indices
        .iter()
        .enumerate()
        .map(|(idx, &i)| {
            select_source(cloud, cloud.point(i), radius).map_err(|e| VoltError::Landmark {
                index: idx,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut emb = embedding_from_sources(graph, &sources, cfg)?;
    emb.landmarks = Some(LandmarkSet {
        radius: Some(radius),
        ..landmarks.clone()
    });
    Ok(emb)
}

/// Center the embedding columns and keep the `d` leading scaled left
/// singular vectors. The sign of each vector is fixed so its
/// largest-magnitude entry is positive. Returns the coordinates and the
/// full singular spectrum.
pub fn mds_project(emb: &Embedding, d: usize) -> Result<(Matrix, Vec<f64>)> {
    let m = emb.z.ncols();
    if d == 0 || d > m {
        return Err(VoltError::InvalidSpec {
            field: "mds.d",
            message: format!("need 1 <= d <= m = {m}, got {d}"),
        });
    }
    let mut centered = emb.z.clone();
    centered.center_columns();
    let mut svd = centered.to_nalgebra().svd(true, true);
    svd.sort_by_singular_values();
    let mut u = svd.u.ok_or(VoltError::SingularSystem("SVD returned no U"))?;
    let mut v_t = svd
        .v_t
        .ok_or(VoltError::SingularSystem("SVD returned no V^T"))?;
    let s = svd.singular_values;

    for c in 0..u.ncols() {
        let mut arg = 0;
        let mut best = -1.0;
        for i in 0..u.nrows() {
            let a = u[(i, c)].abs();
            if a > best {
                best = a;
                arg = i;
            }
        }
        if u[(arg, c)] < 0.0 {
            for i in 0..u.nrows() {
                u[(i, c)] = -u[(i, c)];
            }
            for j in 0..v_t.ncols() {
                v_t[(c, j)] = -v_t[(c, j)];
            }
        }
    }

    let n = emb.z.nrows();
    let mut coords = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            coords.set(i, j, u[(i, j)] * s[j]);
        }
    }
    Ok((coords, s.iter().copied().collect()))
}

/// Best orthogonal alignment of `x` onto `y` (both centered internally).
/// Reflections are permitted. Returns the rotated copy of `x` and the
/// residual Frobenius norm relative to `||y||`.
pub fn procrustes_align(x: &Matrix, y: &Matrix) -> Result<(Matrix, f64)> {
    if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
        return Err(VoltError::DimensionMismatch {
            expected: y.nrows() * y.ncols(),
            got: x.nrows() * x.ncols(),
        });
    }
    let mut xc = x.clone();
    xc.center_columns();
    let mut yc = y.clone();
    yc.center_columns();
    let xna = xc.to_nalgebra();
    let yna = yc.to_nalgebra();
    let m = xna.transpose() * &yna;
    let svd = m.svd(true, true);
    let u = svd.u.ok_or(VoltError::SingularSystem("SVD returned no U"))?;
    let v_t = svd
        .v_t
        .ok_or(VoltError::SingularSystem("SVD returned no V^T"))?;
    let q = u * v_t;
    let aligned = &xna * q;
    let residual = (&aligned - &yna).norm();
    let scale = yna.norm();
    let error = if scale > 0.0 { residual / scale } else { residual };
    Ok((Matrix::from_nalgebra(&aligned), error))
}

/// Result of the sampled far-pair collision check.
#[derive(Debug, Clone, Serialize)]
pub struct InjectivityReport {
    /// Pairs with ambient distance above epsilon whose embedding rows are
    /// within eta of each other.
    pub violations: Vec<(usize, usize)>,
    pub pairs_tested: usize,
    pub far_pairs: usize,
    /// Smallest embedding-row distance seen among far pairs.
    pub min_margin: Option<f64>,
}

/// Default pair budget for [`check_injectivity`].
pub const INJECTIVITY_BUDGET: usize = 100_000;

/// Sample `budget` node pairs deterministically and flag every pair that is
/// farther than `epsilon` in ambient space yet within `eta` in embedding
/// space. An empty violation list is success.
pub fn check_injectivity(
    emb: &Embedding,
    cloud: &PointCloud,
    epsilon: f64,
    eta: f64,
    budget: usize,
    seed: u64,
) -> Result<InjectivityReport> {
    if !(epsilon > 0.0) {
        return Err(VoltError::InvalidSpec {
            field: "injectivity.epsilon",
            message: format!("must be positive, got {epsilon}"),
        });
    }
    if eta < 0.0 {
        return Err(VoltError::InvalidSpec {
            field: "injectivity.eta",
            message: format!("must be non-negative, got {eta}"),
        });
    }
    let n = cloud.n();
    if emb.z.nrows() != n {
        return Err(VoltError::DimensionMismatch {
            expected: n,
            got: emb.z.nrows(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut far_pairs = 0usize;
    let mut min_margin: Option<f64> = None;
    for _ in 0..budget {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n);
        while j == i {
            j = rng.random_range(0..n);
        }
        if euclidean(cloud.point(i), cloud.point(j)) > epsilon {
            far_pairs += 1;
            let d_emb = euclidean(emb.z.row(i), emb.z.row(j));
            if min_margin.is_none_or(|m| d_emb < m) {
                min_margin = Some(d_emb);
            }
            if d_emb <= eta {
                violations.push((i, j));
            }
        }
    }
    Ok(InjectivityReport {
        violations,
        pairs_tested: budget,
        far_pairs,
        min_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_grounded_graph;
    use crate::manifold::{sample_manifold, ManifoldSpec};
    use crate::solver::solve_grounded_emv;
    use std::f64::consts::PI;

    fn circle_cloud(n: usize) -> PointCloud {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        PointCloud::from_points(Matrix::from_rows(&rows).unwrap())
    }

    #[test]
    fn landmark_selection_is_deterministic() {
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, 100, 4).unwrap();
        let a = select_landmarks(&cloud, 1, LandmarkStrategy::UniformRandom, 5).unwrap();
        let b = select_landmarks(&cloud, 1, LandmarkStrategy::UniformRandom, 5).unwrap();
        assert_eq!(a.indices, b.indices);

        let all = select_landmarks(&cloud, 100, LandmarkStrategy::UniformRandom, 5).unwrap();
        let mut sorted = all.indices.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());

        assert!(select_landmarks(&cloud, 101, LandmarkStrategy::UniformRandom, 5).is_err());
    }

    #[test]
    fn farthest_point_spreads_over_circle() {
        // Four greedy picks on a 100-point circle: brute-force max-min says
        // every pair is at least (3/4) * (pi/2) apart in arc length.
        let cloud = circle_cloud(100);
        let lm = select_landmarks(&cloud, 4, LandmarkStrategy::FarthestPoint, 1).unwrap();
        let angle = |i: usize| 2.0 * PI * (i as f64) / 100.0;
        for (a, &i) in lm.indices.iter().enumerate() {
            for &j in &lm.indices[a + 1..] {
                let mut gap = (angle(i) - angle(j)).abs();
                if gap > PI {
                    gap = 2.0 * PI - gap;
                }
                assert!(gap >= 0.75 * (PI / 2.0) - 1e-9, "arc gap {gap}");
            }
        }
    }

    #[test]
    fn single_landmark_embedding_is_the_voltage_vector() {
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, 150, 2).unwrap();
        let g = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: 0.15 }, 0.5).unwrap();
        let lm = LandmarkSet {
            indices: vec![7],
            radius: None,
            strategy: LandmarkStrategy::UniformRandom,
            seed: 0,
        };
        let emb = voltage_embedding(&g, &lm, &SolverConfig::default()).unwrap();
        assert_eq!(emb.z.ncols(), 1);
        let src = select_source(&cloud, cloud.point(7), 0.15).unwrap();
        let (v, _) = solve_grounded_emv(&g, &src, &SolverConfig::default()).unwrap();
        for i in 0..g.n() {
            assert_eq!(emb.z.get(i, 0), v.values[i]);
        }
        for &i in &src.mask {
            assert_eq!(emb.z.get(i, 0), 1.0);
        }
    }

    #[test]
    fn permuting_landmarks_permutes_columns() {
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, 120, 6).unwrap();
        let g = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: 0.15 }, 0.5).unwrap();
        let cfg = SolverConfig::default();
        let fwd = LandmarkSet {
            indices: vec![3, 50, 90],
            radius: None,
            strategy: LandmarkStrategy::UniformRandom,
            seed: 0,
        };
        let rev = LandmarkSet {
            indices: vec![90, 50, 3],
            ..fwd.clone()
        };
        let a = voltage_embedding(&g, &fwd, &cfg).unwrap();
        let b = voltage_embedding(&g, &rev, &cfg).unwrap();
        for i in 0..g.n() {
            for c in 0..3 {
                assert_eq!(a.z.get(i, c), b.z.get(i, 2 - c));
            }
        }
    }

    #[test]
    fn parallel_columns_match_serial_solves() {
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, 200, 8).unwrap();
        let g = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: 0.12 }, 0.3).unwrap();
        let cfg = SolverConfig::default();
        let lm = select_landmarks(&cloud, 4, LandmarkStrategy::UniformRandom, 3).unwrap();
        let emb = voltage_embedding(&g, &lm, &cfg).unwrap();
        for (c, &idx) in lm.indices.iter().enumerate() {
            let src = select_source(&cloud, cloud.point(idx), 0.12).unwrap();
            let (v, _) = solve_grounded_emv(&g, &src, &cfg).unwrap();
            for i in 0..g.n() {
                assert_eq!(emb.z.get(i, c), v.values[i], "column {c} node {i}");
            }
        }
    }

    #[test]
    fn mds_on_identical_rows_is_zero() {
        let z = Matrix::from_rows(&[vec![0.3, 0.7], vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        let emb = Embedding {
            z,
            sources: vec![],
            landmarks: None,
        };
        let (coords, _) = mds_project(&emb, 2).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert!(coords.get(i, j).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn mds_recovers_dominant_orthogonal_columns() {
        // Centered matrix with orthogonal columns of norms sqrt(12) >
        // sqrt(6) > sqrt(2), each with a unique positive largest entry so
        // the sign convention keeps them as-is. The leading two coordinates
        // reproduce the two dominant columns exactly.
        let z = Matrix::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![-1.0, 2.0, 0.0],
            vec![-1.0, -1.0, 1.0],
            vec![-1.0, -1.0, -1.0],
        ])
        .unwrap();
        let emb = Embedding {
            z: z.clone(),
            sources: vec![],
            landmarks: None,
        };
        let (coords, spectrum) = mds_project(&emb, 2).unwrap();
        assert!((spectrum[0] - 12.0f64.sqrt()).abs() <= 1e-12);
        assert!((spectrum[1] - 6.0f64.sqrt()).abs() <= 1e-12);
        assert!((spectrum[2] - 2.0f64.sqrt()).abs() <= 1e-12);
        for i in 0..4 {
            for j in 0..2 {
                assert!(
                    (coords.get(i, j) - z.get(i, j)).abs() <= 1e-12,
                    "({i},{j}): {} vs {}",
                    coords.get(i, j),
                    z.get(i, j)
                );
            }
        }
    }

    #[test]
    fn mds_full_rank_reconstructs() {
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, 60, 12).unwrap();
        let g = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: 0.25 }, 0.5).unwrap();
        let lm = select_landmarks(&cloud, 4, LandmarkStrategy::UniformRandom, 1).unwrap();
        let emb = voltage_embedding(&g, &lm, &SolverConfig::default()).unwrap();
        let mut centered = emb.z.clone();
        centered.center_columns();
        let mut svd = centered.to_nalgebra().svd(true, true);
        svd.sort_by_singular_values();
        let (coords, _) = mds_project(&emb, 4).unwrap();
        // X_d V^T must reconstruct the centered matrix at full rank.
        let v_t = svd.v_t.unwrap();
        // Re-apply the sign convention used by mds_project to V^T.
        let u = svd.u.unwrap();
        let mut v_t_fixed = v_t.clone();
        for c in 0..u.ncols() {
            let mut arg = 0;
            let mut best = -1.0;
            for i in 0..u.nrows() {
                if u[(i, c)].abs() > best {
                    best = u[(i, c)].abs();
                    arg = i;
                }
            }
            if u[(arg, c)] < 0.0 {
                for j in 0..v_t_fixed.ncols() {
                    v_t_fixed[(c, j)] = -v_t_fixed[(c, j)];
                }
            }
        }
        let recon = coords.to_nalgebra() * v_t_fixed;
        let diff = (recon - centered.to_nalgebra()).norm();
        assert!(diff <= 1e-9, "reconstruction error {diff}");
    }

    #[test]
    fn mds_rejects_bad_dimension() {
        let emb = Embedding {
            z: Matrix::zeros(4, 2),
            sources: vec![],
            landmarks: None,
        };
        assert!(mds_project(&emb, 3).is_err());
        assert!(mds_project(&emb, 0).is_err());
    }

    #[test]
    fn procrustes_identity_and_rotation() {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.5, -0.5],
        ])
        .unwrap();
        let (_, err) = procrustes_align(&x, &x).unwrap();
        assert!(err <= 1e-12);

        // Rotate by a known orthogonal matrix; alignment recovers it.
        let theta: f64 = 0.83;
        let rows: Vec<Vec<f64>> = x
            .rows()
            .map(|r| {
                vec![
                    r[0] * theta.cos() - r[1] * theta.sin(),
                    r[0] * theta.sin() + r[1] * theta.cos(),
                ]
            })
            .collect();
        let y = Matrix::from_rows(&rows).unwrap();
        let (aligned, err) = procrustes_align(&x, &y).unwrap();
        assert!(err <= 1e-10, "rotation residual {err}");
        // The aligned copy lives in centered coordinates.
        let mut yc = y.clone();
        yc.center_columns();
        for i in 0..x.nrows() {
            for j in 0..2 {
                assert!((aligned.get(i, j) - yc.get(i, j)).abs() <= 1e-10);
            }
        }

        // x = -y is a reflection away; reflections are allowed.
        let neg_rows: Vec<Vec<f64>> = x.rows().map(|r| vec![-r[0], -r[1]]).collect();
        let neg = Matrix::from_rows(&neg_rows).unwrap();
        let (_, err) = procrustes_align(&neg, &x).unwrap();
        assert!(err <= 1e-12, "reflection residual {err}");
    }

    #[test]
    fn injectivity_vacuous_for_duplicates() {
        // Duplicate points have ambient distance 0 <= epsilon, so the
        // premise never fires and eta = 0 flags nothing.
        let cloud = PointCloud::from_points(
            Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap(),
        );
        let emb = Embedding {
            z: Matrix::zeros(3, 1),
            sources: vec![],
            landmarks: None,
        };
        let report = check_injectivity(&emb, &cloud, 0.5, 0.0, 1000, 7).unwrap();
        assert!(report.violations.is_empty());
        assert_eq!(report.far_pairs, 0);
    }

    #[test]
    fn single_voltage_cannot_separate_a_symmetric_ring() {
        // One landmark on the sphere: voltage depends only on the angle to
        // the landmark, so antipodal-ish pairs straddling the same ring
        // collide. Violations are EXPECTED here.
        let cloud = sample_manifold(&ManifoldSpec::Sphere { dim: 3 }, 2048, 5).unwrap();
        let g = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: 0.4 }, 0.1).unwrap();
        let lm = LandmarkSet {
            indices: vec![0],
            radius: None,
            strategy: LandmarkStrategy::UniformRandom,
            seed: 0,
        };
        let emb = voltage_embedding(&g, &lm, &SolverConfig::default()).unwrap();
        // Equal-voltage rings exist; with a generous eta the checker must
        // find far pairs that the single column cannot separate.
        let report = check_injectivity(&emb, &cloud, 1.0, 1e-6, 100_000, 11).unwrap();
        assert!(
            !report.violations.is_empty(),
            "a single radial voltage should not be injective at this scale"
        );
    }
}
