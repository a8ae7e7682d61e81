//! Grounded resistor graphs over point clouds.
//!
//! Pairwise weights are `k(x_i, x_j) / n` and the ground weight is the
//! user-facing `rho_g` unchanged; the voltage fixed point is invariant under
//! joint rescaling of weights and ground, and this normalization makes the
//! per-node weight sum converge to the kernel integral so `rho_g` plays the
//! role of the continuum ground constant. Self-loops cancel identically in
//! the fixed point and are never stored.

use std::collections::HashMap;

use crate::manifold::{KernelSpec, PointCloud};
use crate::matrix::euclidean;
use crate::{Result, VoltError};

/// Sparse symmetric weighted graph plus ground weight.
///
/// Adjacency is CSR: `neighbors[offsets[i]..offsets[i+1]]` lists the
/// neighbors of node `i` in ascending index order, with matching entries in
/// `weights`. `degree[i]` is the sum of incident weights (ground excluded).
#[derive(Debug, Clone)]
pub struct GroundedGraph {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
    degree: Vec<f64>,
    rho: f64,
    points: Option<PointCloud>,
    kernel: Option<KernelSpec>,
}

/// A metric ball pinned to voltage 1: its center, radius, and the sorted
/// indices of sample points inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRegion {
    pub center: Vec<f64>,
    pub radius: f64,
    pub mask: Vec<usize>,
}

impl SourceRegion {
    /// Build a source from an explicit node set (centered on the first node).
    pub fn from_mask(cloud: &PointCloud, mut mask: Vec<usize>) -> Result<Self> {
        if mask.is_empty() {
            return Err(VoltError::EmptySource { radius: 0.0 });
        }
        mask.sort_unstable();
        mask.dedup();
        Ok(SourceRegion {
            center: cloud.point(mask[0]).to_vec(),
            radius: 0.0,
            mask,
        })
    }
}

/// Indices of all cloud points within `radius` of `center`, ascending.
/// An empty intersection is an error: solving with no constrained node
/// would silently return the trivial zero function.
pub fn select_source(cloud: &PointCloud, center: &[f64], radius: f64) -> Result<SourceRegion> {
    if center.len() != cloud.dim() {
        return Err(VoltError::DimensionMismatch {
            expected: cloud.dim(),
            got: center.len(),
        });
    }
    if radius < 0.0 {
        return Err(VoltError::InvalidSpec {
            field: "source.radius",
            message: format!("must be non-negative, got {radius}"),
        });
    }
    let mask: Vec<usize> = (0..cloud.n())
        .filter(|&i| euclidean(cloud.point(i), center) <= radius)
        .collect();
    if mask.is_empty() {
        return Err(VoltError::EmptySource { radius });
    }
    Ok(SourceRegion {
        center: center.to_vec(),
        radius,
        mask,
    })
}

/// Options for [`build_grounded_graph_with`].
#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Drop Gaussian weights for pairs farther than `3 sigma` apart
    /// (below `exp(-4.5)`). On by default; an approximation knob only —
    /// the radial kernel is always exact.
    pub gaussian_cutoff: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            gaussian_cutoff: true,
        }
    }
}

/// Build the grounded graph for a cloud and kernel with default options.
pub fn build_grounded_graph(
    cloud: &PointCloud,
    kernel: &KernelSpec,
    rho_g: f64,
) -> Result<GroundedGraph> {
    build_grounded_graph_with(cloud, kernel, rho_g, BuildOptions::default())
}

/// Build the grounded graph. The radial kernel uses an exact uniform-grid
/// neighbor search with cell size equal to the bandwidth; the Gaussian
/// kernel falls back to all pairs, optionally truncated at `3 sigma`.
pub fn build_grounded_graph_with(
    cloud: &PointCloud,
    kernel: &KernelSpec,
    rho_g: f64,
    options: BuildOptions,
) -> Result<GroundedGraph> {
    kernel.validate()?;
    let n = cloud.n();
    if n < 2 {
        return Err(VoltError::InvalidSpec {
            field: "cloud.n",
            message: format!("graph construction needs at least 2 points, got {n}"),
        });
    }
    if !(rho_g >= 0.0) {
        return Err(VoltError::InvalidSpec {
            field: "rho_g",
            message: format!("must be non-negative, got {rho_g}"),
        });
    }

    let inv_n = 1.0 / n as f64;
    let mut adjacency: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    match *kernel {
        KernelSpec::Radial { bandwidth } => {
            let grid = CellGrid::build(cloud, bandwidth);
            let r2 = bandwidth * bandwidth;
            for i in 0..n {
                let p = cloud.point(i);
                grid.for_candidates(p, |j| {
                    if j as usize != i {
                        let q = cloud.point(j as usize);
                        let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                        if d2 <= r2 {
                            adjacency[i].push((j, inv_n));
                        }
                    }
                });
                adjacency[i].sort_unstable_by_key(|&(j, _)| j);
            }
        }
        KernelSpec::Gaussian { sigma } => {
            let cutoff2 = if options.gaussian_cutoff {
                Some(9.0 * sigma * sigma)
            } else {
                None
            };
            for i in 0..n {
                let p = cloud.point(i);
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let q = cloud.point(j);
                    let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    if let Some(c2) = cutoff2 {
                        if d2 > c2 {
                            continue;
                        }
                    }
                    let w = (-d2 / (2.0 * sigma * sigma)).exp() * inv_n;
                    if w > 0.0 {
                        adjacency[i].push((j as u32, w));
                    }
                }
            }
        }
    }

    Ok(GroundedGraph::from_adjacency(
        adjacency,
        rho_g,
        Some(cloud.clone()),
        Some(*kernel),
    ))
}

impl GroundedGraph {
    fn from_adjacency(
        adjacency: Vec<Vec<(u32, f64)>>,
        rho: f64,
        points: Option<PointCloud>,
        kernel: Option<KernelSpec>,
    ) -> Self {
        let n = adjacency.len();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0usize);
        let nnz: usize = adjacency.iter().map(Vec::len).sum();
        let mut neighbors = Vec::with_capacity(nnz);
        let mut weights = Vec::with_capacity(nnz);
        let mut degree = Vec::with_capacity(n);
        for row in &adjacency {
            let mut deg = 0.0;
            for &(j, w) in row {
                neighbors.push(j);
                weights.push(w);
                deg += w;
            }
            degree.push(deg);
            offsets.push(neighbors.len());
        }
        GroundedGraph {
            n,
            offsets,
            neighbors,
            weights,
            degree,
            rho,
            points,
            kernel,
        }
    }

    /// Assemble a graph from an undirected edge list `(i, j, weight)` with
    /// `i != j`; weights are stored as given (no `1/n` rescaling). Used for
    /// imported edge lists and hand-built fixtures.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize, f64)],
        rho: f64,
        points: Option<PointCloud>,
        kernel: Option<KernelSpec>,
    ) -> Result<Self> {
        if !(rho >= 0.0) {
            return Err(VoltError::InvalidSpec {
                field: "rho_g",
                message: format!("must be non-negative, got {rho}"),
            });
        }
        let mut adjacency: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i == j {
                return Err(VoltError::InvalidSpec {
                    field: "edge",
                    message: format!("self-loop at node {i}"),
                });
            }
            if i >= n || j >= n {
                return Err(VoltError::InvalidSpec {
                    field: "edge",
                    message: format!("edge ({i}, {j}) out of range for n = {n}"),
                });
            }
            if !(w > 0.0) {
                return Err(VoltError::InvalidSpec {
                    field: "edge.weight",
                    message: format!("edge ({i}, {j}) has non-positive weight {w}"),
                });
            }
            adjacency[i].push((j as u32, w));
            adjacency[j].push((i as u32, w));
        }
        for row in &mut adjacency {
            row.sort_unstable_by_key(|&(j, _)| j);
        }
        Ok(GroundedGraph::from_adjacency(adjacency, rho, points, kernel))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Replace the ground weight (the adjacency is untouched).
    pub fn with_rho(&self, rho: f64) -> Self {
        let mut g = self.clone();
        g.rho = rho;
        g
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degree[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    pub fn max_degree(&self) -> f64 {
        self.degree.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_degree(&self) -> f64 {
        self.degree.iter().sum::<f64>() / self.n as f64
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.offsets[i];
        let hi = self.offsets[i + 1];
        self.neighbors[lo..hi]
            .iter()
            .zip(&self.weights[lo..hi])
            .map(|(&j, &w)| (j as usize, w))
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Undirected edges with `i < j`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| i < j)
                .map(move |(j, w)| (i, j, w))
        })
    }

    pub fn points(&self) -> Result<&PointCloud> {
        self.points.as_ref().ok_or(VoltError::MissingPoints)
    }

    pub fn kernel(&self) -> Result<&KernelSpec> {
        self.kernel.as_ref().ok_or(VoltError::MissingKernel)
    }

    /// Mark every node reachable from `seeds` along edges.
    pub fn reachable_from(&self, seeds: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack: Vec<usize> = Vec::new();
        for &s in seeds {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
        while let Some(i) = stack.pop() {
            let lo = self.offsets[i];
            let hi = self.offsets[i + 1];
            for &j in &self.neighbors[lo..hi] {
                let j = j as usize;
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.reachable_from(&[0]).iter().all(|&b| b)
    }
}

/// Uniform spatial hash with cell size equal to the search radius, so a
/// point's neighbors can only live in the 3^d surrounding cells.
struct CellGrid {
    cells: HashMap<Vec<i64>, Vec<u32>>,
    cell_size: f64,
    dim: usize,
}

impl CellGrid {
    fn build(cloud: &PointCloud, cell_size: f64) -> Self {
        let dim = cloud.dim();
        let mut cells: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
        for i in 0..cloud.n() {
            let key = Self::key_of(cloud.point(i), cell_size);
            cells.entry(key).or_default().push(i as u32);
        }
        CellGrid {
            cells,
            cell_size,
            dim,
        }
    }

    fn key_of(p: &[f64], cell_size: f64) -> Vec<i64> {
        p.iter().map(|&x| (x / cell_size).floor() as i64).collect()
    }

    /// Visit every point stored in the 3^d cells around `p`, in cell-major,
    /// insertion order. Candidates are a superset of the true neighbors;
    /// the caller applies the exact distance test.
    fn for_candidates<F: FnMut(u32)>(&self, p: &[f64], mut f: F) {
        let base = Self::key_of(p, self.cell_size);
        let mut offset = vec![-1i64; self.dim];
        loop {
            let key: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(members) = self.cells.get(&key) {
                for &j in members {
                    f(j);
                }
            }
            // odometer over {-1, 0, 1}^d
            let mut carry = true;
            for slot in offset.iter_mut() {
                *slot += 1;
                if *slot <= 1 {
                    carry = false;
                    break;
                }
                *slot = -1;
            }
            if carry {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{sample_manifold, ManifoldSpec};
    use crate::matrix::Matrix;

    fn cloud_1d(xs: &[f64]) -> PointCloud {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        PointCloud::from_points(Matrix::from_rows(&rows).unwrap())
    }

    /// O(n^2) reference for the radial-kernel pair set.
    fn brute_force_pairs(cloud: &PointCloud, r: f64) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for i in 0..cloud.n() {
            for j in (i + 1)..cloud.n() {
                if euclidean(cloud.point(i), cloud.point(j)) <= r {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    #[test]
    fn two_points_inside_radius() {
        let cloud = cloud_1d(&[0.0, 0.01]);
        let g = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: 0.05 }, 1.0).unwrap();
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1, 0.5)]);
        assert_eq!(g.degrees(), &[0.5, 0.5]);
        assert_eq!(g.rho(), 1.0);
    }

    #[test]
    fn collinear_points_skip_far_pair() {
        let cloud = cloud_1d(&[0.0, 0.04, 0.08]);
        let g = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: 0.05 }, 1.0).unwrap();
        let edges: Vec<_> = g.edges().collect();
        let w = 1.0 / 3.0;
        assert_eq!(edges.len(), 2);
        assert_eq!(edges[0], (0, 1, w));
        assert_eq!(edges[1], (1, 2, w));
    }

    #[test]
    fn grid_matches_brute_force_on_unit_square() {
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, 1000, 42).unwrap();
        let r = 0.05;
        let g = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: r }, 1.0).unwrap();
        let built: Vec<(usize, usize)> = g.edges().map(|(i, j, _)| (i, j)).collect();
        assert_eq!(built, brute_force_pairs(&cloud, r));
    }

    #[test]
    fn grid_matches_brute_force_across_geometries() {
        let cases: Vec<(ManifoldSpec, usize, f64)> = vec![
            (ManifoldSpec::Interval { lo: 0.0, hi: 3.0 }, 2000, 0.02),
            (ManifoldSpec::UnitSquare, 2000, 0.07),
            (ManifoldSpec::Sphere { dim: 3 }, 1500, 0.2),
            (
                ManifoldSpec::Disk {
                    dim: 2,
                    radius: ManifoldSpec::unit_volume_disk_radius(2),
                },
                1200,
                0.05,
            ),
        ];
        for (seed, (spec, n, r)) in cases.into_iter().enumerate() {
            let cloud = sample_manifold(&spec, n, seed as u64 + 1).unwrap();
            let g =
                build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: r }, 1.0).unwrap();
            let built: Vec<(usize, usize)> = g.edges().map(|(i, j, _)| (i, j)).collect();
            assert_eq!(built, brute_force_pairs(&cloud, r), "{spec:?}");
        }
    }

    #[test]
    fn degree_sums_incident_weights() {
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, 300, 7).unwrap();
        let g = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: 0.1 }, 0.5).unwrap();
        for i in 0..g.n() {
            let sum: f64 = g.neighbors(i).map(|(_, w)| w).sum();
            let deg = g.degree(i);
            if deg > 0.0 {
                assert!((sum - deg).abs() <= 1e-12 * deg.abs());
            } else {
                assert_eq!(sum, 0.0);
            }
        }
    }

    #[test]
    fn row_sum_of_iteration_operator_is_below_one() {
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, 200, 3).unwrap();
        let g = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: 0.1 }, 0.2).unwrap();
        for i in 0..g.n() {
            let deg = g.degree(i);
            if deg > 0.0 {
                let row_sum = deg / (g.rho() + deg);
                let alt = 1.0 / (1.0 + g.rho() / deg);
                assert!((row_sum - alt).abs() <= 1e-15);
                assert!(row_sum < 1.0);
            }
        }
    }

    #[test]
    fn mean_degree_concentrates_as_n_doubles() {
        // Mean degree approaches the kernel-ball mass; successive
        // quadruplings should move it less and less. Median over seeds to
        // tame noise.
        let r = 0.1;
        let mut gaps: Vec<Vec<f64>> = vec![Vec::new(); 2];
        for seed in [1u64, 2, 3, 4, 5, 6, 7] {
            let mut means = Vec::new();
            for n in [500usize, 2000, 8000] {
                let cloud = sample_manifold(&ManifoldSpec::UnitSquare, n, seed).unwrap();
                let g =
                    build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: r }, 1.0).unwrap();
                means.push(g.mean_degree());
            }
            gaps[0].push((means[1] - means[0]).abs());
            gaps[1].push((means[2] - means[1]).abs());
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        assert!(median(&mut gaps[1]) < median(&mut gaps[0]));
    }

    #[test]
    fn gaussian_cutoff_drops_far_pairs() {
        let cloud = cloud_1d(&[0.0, 0.1, 10.0]);
        let k = KernelSpec::Gaussian { sigma: 0.1 };
        let with_cutoff = build_grounded_graph(&cloud, &k, 1.0).unwrap();
        assert_eq!(with_cutoff.edge_count(), 1);
        let without = build_grounded_graph_with(
            &cloud,
            &k,
            1.0,
            BuildOptions {
                gaussian_cutoff: false,
            },
        )
        .unwrap();
        // exp(-10^2 / 2*0.01) underflows to zero, so the (0, 10) pair is
        // dropped either way; (0.1, 10.0) too. Same edge set here.
        assert_eq!(without.edge_count(), 1);
        let near = build_grounded_graph_with(
            &cloud_1d(&[0.0, 0.1, 0.5]),
            &k,
            1.0,
            BuildOptions {
                gaussian_cutoff: false,
            },
        )
        .unwrap();
        assert_eq!(near.edge_count(), 3);
    }

    #[test]
    fn gaussian_weights_are_exactly_symmetric() {
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, 120, 19).unwrap();
        let g =
            build_grounded_graph(&cloud, &KernelSpec::Gaussian { sigma: 0.2 }, 0.5).unwrap();
        for i in 0..g.n() {
            for (j, w) in g.neighbors(i) {
                let back = g.neighbors(j).find(|&(k, _)| k == i).map(|(_, w)| w);
                assert_eq!(back, Some(w), "asymmetry at ({i}, {j})");
            }
        }
    }

    #[test]
    fn select_source_boundary_and_errors() {
        let cloud = sample_manifold(&ManifoldSpec::Interval { lo: 0.0, hi: 3.0 }, 64, 7).unwrap();
        let center = cloud.point(17).to_vec();
        let s = select_source(&cloud, &center, 0.0).unwrap();
        assert_eq!(s.mask, vec![17]);
        assert!(matches!(
            select_source(&cloud, &[100.0], 0.001),
            Err(VoltError::EmptySource { .. })
        ));
    }

    #[test]
    fn source_on_interval_catches_right_end() {
        let cloud = sample_manifold(&ManifoldSpec::Interval { lo: 0.0, hi: 3.0 }, 256, 5).unwrap();
        let s = select_source(&cloud, &[2.5], 0.5).unwrap();
        let expected: Vec<usize> = (0..cloud.n())
            .filter(|&i| {
                let x = cloud.point(i)[0];
                (2.0..=3.0).contains(&x)
            })
            .collect();
        assert_eq!(s.mask, expected);
        assert!(!s.mask.is_empty());
    }

    #[test]
    fn from_edges_builds_symmetric_csr() {
        let g = GroundedGraph::from_edges(3, &[(0, 1, 2.0), (1, 2, 3.0)], 0.1, None, None).unwrap();
        assert_eq!(g.degree(1), 5.0);
        let nb: Vec<_> = g.neighbors(1).collect();
        assert_eq!(nb, vec![(0, 2.0), (2, 3.0)]);
        assert!(GroundedGraph::from_edges(2, &[(0, 0, 1.0)], 0.0, None, None).is_err());
        assert!(GroundedGraph::from_edges(2, &[(0, 1, -1.0)], 0.0, None, None).is_err());
    }

    #[test]
    fn reachability_splits_components() {
        let g = GroundedGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)], 0.0, None, None).unwrap();
        let seen = g.reachable_from(&[0]);
        assert_eq!(seen, vec![true, true, false, false]);
        assert!(!g.is_connected());
    }
}
