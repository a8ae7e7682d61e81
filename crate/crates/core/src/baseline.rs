//! Source-to-sink comparison fields: the pinned power method and three
//! effective-resistance constructions.
//!
//! These reproduce the degeneration of point-to-point effective resistance
//! on growing metric samples: the point-source field collapses onto its two
//! endpoints while region-source fields stabilize. The Laplacian
//! pseudo-inverse is never materialized; every ER quantity goes through a
//! mean-zero conjugate-gradient solve.

use std::time::Instant;

use crate::graph::{GroundedGraph, SourceRegion};
use crate::manifold::PointCloud;
use crate::matrix::euclidean;
use crate::solver::{SolveReport, SolverConfig, VoltageFunction};
use crate::{Result, VoltError};

/// Relative residual at which the conjugate gradient stops.
pub const CG_TOL: f64 = 1e-8;
/// Iteration cap, as a multiple of the node count.
pub const CG_CAP_FACTOR: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// Fixed-point iteration with source pinned to 1 and sink to 0.
    Pm,
    /// Unit current spread over the source region, drained over the sink
    /// region, mean removed.
    RegionEr,
    /// Point currents at the representative nodes, scaled by the region
    /// densities, mean removed.
    DensityEr,
    /// Classical two-point effective-resistance field.
    PointEr,
}

/// A source/sink pair plus the representative node nearest each center
/// (used by the point modes).
#[derive(Debug, Clone)]
pub struct SourceSinkSpec {
    pub source: SourceRegion,
    pub sink: SourceRegion,
    pub mode: BaselineMode,
    pub source_node: usize,
    pub sink_node: usize,
}

impl SourceSinkSpec {
    pub fn new(
        cloud: &PointCloud,
        source: SourceRegion,
        sink: SourceRegion,
        mode: BaselineMode,
    ) -> Result<Self> {
        if source.mask.iter().any(|i| sink.mask.binary_search(i).is_ok()) {
            return Err(VoltError::InvalidSpec {
                field: "source_sink",
                message: "source and sink masks overlap".to_string(),
            });
        }
        let source_node = nearest_node(cloud, &source.center)?;
        let sink_node = nearest_node(cloud, &sink.center)?;
        Ok(SourceSinkSpec {
            source,
            sink,
            mode,
            source_node,
            sink_node,
        })
    }
}

fn nearest_node(cloud: &PointCloud, center: &[f64]) -> Result<usize> {
    if center.len() != cloud.dim() {
        return Err(VoltError::DimensionMismatch {
            expected: cloud.dim(),
            got: center.len(),
        });
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for i in 0..cloud.n() {
        let d = euclidean(cloud.point(i), center);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(best)
}

/// Pinned power method: source nodes at 1, sink nodes at 0, free nodes
/// relax to their neighbor average. The ground weight is ignored.
///
/// Components touching neither constraint set have no determined value;
/// they are reported as 0 with a warning rather than NaN.
pub fn solve_pm(
    graph: &GroundedGraph,
    spec: &SourceSinkSpec,
    cfg: &SolverConfig,
) -> Result<(VoltageFunction, SolveReport)> {
    cfg.validate()?;
    if spec.source.mask.is_empty() || spec.sink.mask.is_empty() {
        return Err(VoltError::EmptySource {
            radius: spec.source.radius,
        });
    }
    let start = Instant::now();
    let n = graph.n();

    let mut pinned = vec![false; n];
    let mut v = vec![0.0; n];
    for &i in &spec.source.mask {
        pinned[i] = true;
        v[i] = 1.0;
    }
    for &i in &spec.sink.mask {
        pinned[i] = true;
        v[i] = 0.0;
    }

    let seeds: Vec<usize> = spec
        .source
        .mask
        .iter()
        .chain(&spec.sink.mask)
        .copied()
        .collect();
    let reached = graph.reachable_from(&seeds);
    let floating = reached.iter().filter(|&&r| !r).count();
    if floating > 0 {
        log::warn!(
            "{floating} node(s) in components touching neither source nor sink; \
             their values are reported as 0"
        );
    }

    let mut next = v.clone();
    let mut iterations = 0u64;
    let mut residual = f64::INFINITY;
    let mut prev_residual: Option<f64> = None;
    let mut ratio_max = 0.0f64;
    let mut converged = false;

    while iterations < cfg.max_iters {
        residual = 0.0;
        for i in 0..n {
            if pinned[i] || graph.degree(i) == 0.0 {
                continue;
            }
            let num: f64 = graph.neighbors(i).map(|(j, w)| w * v[j]).sum();
            let value = num / graph.degree(i);
            let change = (value - v[i]).abs();
            if change > residual {
                residual = change;
            }
            next[i] = value;
        }
        std::mem::swap(&mut v, &mut next);
        iterations += 1;
        if let Some(prev) = prev_residual {
            if prev > 0.0 {
                ratio_max = ratio_max.max(residual / prev);
            }
        }
        prev_residual = Some(residual);
        if residual <= cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "pinned power method hit max_iters = {} with residual {residual:.3e}",
            cfg.max_iters
        );
    }

    let report = SolveReport {
        iterations,
        final_residual: residual,
        contraction_ratio_observed: ratio_max,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
    };
    Ok((
        VoltageFunction {
            values: v,
            source: spec.source.clone(),
            support: None,
        },
        report,
    ))
}

/// Solve `L x = rhs` on the mean-zero subspace by conjugate gradient,
/// re-centering each iterate. `L = D - W` uses the stored edge weights with
/// no ground term. The returned potential is mean-zero with relative
/// residual at most [`CG_TOL`].
pub fn laplacian_solve(graph: &GroundedGraph, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = graph.n();
    if rhs.len() != n {
        return Err(VoltError::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let sum: f64 = rhs.iter().sum();
    if sum.abs() > 1e-9 {
        return Err(VoltError::NotMeanZero { sum });
    }
    let norm_b = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Ok(vec![0.0; n]);
    }

    let apply = |p: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let mut acc = graph.degree(i) * p[i];
            for (j, w) in graph.neighbors(i) {
                acc -= w * p[j];
            }
            out[i] = acc;
        }
    };
    let recenter = |x: &mut [f64]| {
        let mean: f64 = x.iter().sum::<f64>() / n as f64;
        for v in x.iter_mut() {
            *v -= mean;
        }
    };

    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    recenter(&mut r);
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let cap = CG_CAP_FACTOR * n;

    for _ in 0..cap {
        if rr.sqrt() <= CG_TOL * norm_b {
            // Confirm with the explicit residual; the recurrence can drift.
            apply(&x, &mut ap);
            let explicit: f64 = ap
                .iter()
                .zip(rhs)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if explicit <= CG_TOL * norm_b * 1.01 {
                recenter(&mut x);
                return Ok(x);
            }
            // Restart from the true residual.
            for i in 0..n {
                r[i] = rhs[i] - ap[i];
            }
            recenter(&mut r);
            rr = r.iter().map(|v| v * v).sum();
            p.copy_from_slice(&r);
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(VoltError::SingularSystem(
                "conjugate gradient hit a non-positive curvature direction",
            ));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        recenter(&mut r);
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(VoltError::CgNoConvergence {
        iterations: cap,
        residual: rr.sqrt() / norm_b,
    })
}

/// The effective-resistance comparison fields. Sign-unconstrained; region
/// and density modes are mean-zero by construction.
pub fn er_voltage(graph: &GroundedGraph, spec: &SourceSinkSpec) -> Result<Vec<f64>> {
    if !graph.is_connected() {
        return Err(VoltError::Disconnected("er_voltage"));
    }
    let n = graph.n();
    let nf = n as f64;
    let mut rhs = vec![0.0; n];
    match spec.mode {
        BaselineMode::Pm => {
            return Err(VoltError::InvalidSpec {
                field: "mode",
                message: "PM is a pinned solve; call solve_pm".to_string(),
            })
        }
        BaselineMode::RegionEr => {
            for &i in &spec.source.mask {
                rhs[i] += 1.0;
            }
            for &i in &spec.sink.mask {
                rhs[i] -= 1.0;
            }
        }
        BaselineMode::DensityEr => {
            let p_s = spec.source.mask.len() as f64 / nf;
            let p_g = spec.sink.mask.len() as f64 / nf;
            rhs[spec.source_node] += p_s;
            rhs[spec.sink_node] -= p_g;
        }
        BaselineMode::PointEr => {
            rhs[spec.source_node] += 1.0;
            rhs[spec.sink_node] -= 1.0;
        }
    }
    // Remove the mean so the total external current is zero. For the region
    // mode this subtracts exactly the density difference p_s - p_g.
    let mean: f64 = rhs.iter().sum::<f64>() / nf;
    for v in rhs.iter_mut() {
        *v -= mean;
    }
    laplacian_solve(graph, &rhs)
}

/// Effective resistance between two nodes: the voltage drop under a unit
/// current, `(e_l - e_k)^T L^+ (e_l - e_k)`.
pub fn effective_resistance(graph: &GroundedGraph, l: usize, k: usize) -> Result<f64> {
    if l == k {
        return Ok(0.0);
    }
    if !graph.is_connected() {
        return Err(VoltError::Disconnected("effective_resistance"));
    }
    let mut rhs = vec![0.0; graph.n()];
    rhs[l] = 1.0;
    rhs[k] = -1.0;
    let x = laplacian_solve(graph, &rhs)?;
    Ok(x[l] - x[k])
}

/// Fraction of entries whose magnitude exceeds `ratio` times the maximum
/// magnitude. The collapse diagnostic for point-source fields.
pub fn high_amplitude_fraction(values: &[f64], ratio: f64) -> f64 {
    let max = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max == 0.0 {
        return 0.0;
    }
    let count = values.iter().filter(|&&v| v.abs() > ratio * max).count();
    count as f64 / values.len() as f64
}
