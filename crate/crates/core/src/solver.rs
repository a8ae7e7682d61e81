//! Voltage solves on grounded graphs.
//!
//! The iterative path is literally the fixed-point operator: pin sources to
//! 1, then repeatedly replace every free node's value by its ground-damped
//! neighbor average until the sup-norm change is below tolerance. The
//! operator is a contraction with factor at most `deg / (rho + deg)`, which
//! each solve certifies by tracking the observed residual ratio. A dense
//! direct solve of the same linear system serves as an independent oracle,
//! and a frontier-truncated variant exploits the decay of the solution to
//! touch only nodes near the source.

use std::time::Instant;

use serde::Serialize;

use crate::graph::{GroundedGraph, SourceRegion};
use crate::matrix::{euclidean, Matrix};
use crate::{Result, VoltError};

/// Node-count cap for the dense direct oracle.
pub const DIRECT_ORACLE_CAP: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    /// Fixed-point iteration over every node.
    FullPower,
    /// Frontier-truncated iteration; nodes whose value stays below `tau`
    /// are never activated.
    Localized { tau: f64 },
    /// Dense linear solve (small graphs only).
    DirectOracle,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Sup-norm change between iterates at which the solve stops.
    pub tol: f64,
    pub max_iters: u64,
    pub mode: SolveMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iters: 1_000_000,
            mode: SolveMode::FullPower,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(VoltError::InvalidSpec {
                field: "solver.tol",
                message: format!("must be positive, got {}", self.tol),
            });
        }
        if self.max_iters == 0 {
            return Err(VoltError::InvalidSpec {
                field: "solver.max_iters",
                message: "must be at least 1".to_string(),
            });
        }
        if let SolveMode::Localized { tau } = self.mode {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(VoltError::InvalidSpec {
                    field: "solver.tau",
                    message: format!("must lie in (0, 1), got {tau}"),
                });
            }
        }
        Ok(())
    }
}

/// Per-node potentials in `[0, 1]`, exactly 1 on the source mask.
#[derive(Debug, Clone)]
pub struct VoltageFunction {
    pub values: Vec<f64>,
    pub source: SourceRegion,
    /// Localized solves report the nodes whose value reached `tau`.
    pub support: Option<Vec<usize>>,
}

/// What a solve did: iteration count, final sup-norm change, and the worst
/// observed per-step residual ratio (a certificate that the iteration
/// contracted).
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: u64,
    pub final_residual: f64,
    pub contraction_ratio_observed: f64,
    pub wall_time: f64,
    pub converged: bool,
}

/// Upper bound on the contraction factor: `max_i deg_i / (rho + deg_i)`.
pub fn contraction_bound(graph: &GroundedGraph) -> f64 {
    let d = graph.max_degree();
    if d == 0.0 {
        0.0
    } else {
        d / (graph.rho() + d)
    }
}

fn check_source(graph: &GroundedGraph, source: &SourceRegion) -> Result<()> {
    if source.mask.is_empty() {
        return Err(VoltError::EmptySource {
            radius: source.radius,
        });
    }
    if let Some(&max) = source.mask.iter().max() {
        if max >= graph.n() {
            return Err(VoltError::InvalidSpec {
                field: "source.mask",
                message: format!("node index {max} out of range for n = {}", graph.n()),
            });
        }
    }
    Ok(())
}

/// With no ground the minimizer is the constant extension of the constraint,
/// but only on components that touch the source; elsewhere it is an
/// arbitrary constant and the solve is refused.
fn solve_ungrounded(graph: &GroundedGraph, source: &SourceRegion) -> Result<VoltageFunction> {
    let reached = graph.reachable_from(&source.mask);
    let stranded = reached.iter().filter(|&&r| !r).count();
    if stranded > 0 {
        return Err(VoltError::NoGroundNoSource { count: stranded });
    }
    log::warn!(
        "rho = 0: returning the zero-energy constant extension (all values 1); \
         add a ground weight for a decaying solution"
    );
    Ok(VoltageFunction {
        values: vec![1.0; graph.n()],
        source: source.clone(),
        support: None,
    })
}

/// Solve the grounded voltage problem by fixed-point iteration from the
/// pure source-neighbor term.
pub fn solve_grounded_emv(
    graph: &GroundedGraph,
    source: &SourceRegion,
    cfg: &SolverConfig,
) -> Result<(VoltageFunction, SolveReport)> {
    cfg.validate()?;
    check_source(graph, source)?;
    let start = Instant::now();

    if graph.rho() == 0.0 {
        let v = solve_ungrounded(graph, source)?;
        let report = SolveReport {
            iterations: 0,
            final_residual: 0.0,
            contraction_ratio_observed: 0.0,
            wall_time: start.elapsed().as_secs_f64(),
            converged: true,
        };
        return Ok((v, report));
    }

    let n = graph.n();
    let mut is_source = vec![false; n];
    for &i in &source.mask {
        is_source[i] = true;
    }

    // Source entries are pinned to 1 inside the value vector, so the plain
    // neighbor sum already contains the source term.
    let mut v = vec![0.0; n];
    for &i in &source.mask {
        v[i] = 1.0;
    }
    for i in 0..n {
        // Isolated free nodes keep value 0: the ground term alone
        // determines them.
        if !is_source[i] && graph.degree(i) > 0.0 {
            // fold from +0.0: an f64 iterator sum starts at -0.0, which
            // would leak a negative zero into nodes with no source
            // neighbor and propagate to the CSV output.
            let num: f64 = graph
                .neighbors(i)
                .filter(|&(j, _)| is_source[j])
                .fold(0.0, |acc, (_, w)| acc + w);
            v[i] = num / (graph.rho() + graph.degree(i));
        }
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
            if is_source[i] || graph.degree(i) == 0.0 {
                continue;
            }
            let num: f64 = graph.neighbors(i).map(|(j, w)| w * v[j]).sum();
            let value = num / (graph.rho() + graph.degree(i));
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
            "power method hit max_iters = {} with residual {residual:.3e}",
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
            source: source.clone(),
            support: None,
        },
        report,
    ))
}

/// Independent oracle: assemble the free-node linear system
/// `(rho + deg_i) v_i - sum_{j not in source} W_ij v_j = sum_{j in source} W_ij`
/// and solve it densely.
pub fn solve_direct_oracle(
    graph: &GroundedGraph,
    source: &SourceRegion,
) -> Result<VoltageFunction> {
    check_source(graph, source)?;
    if graph.n() > DIRECT_ORACLE_CAP {
        return Err(VoltError::SizeCap {
            op: "solve_direct_oracle",
            n: graph.n(),
            cap: DIRECT_ORACLE_CAP,
        });
    }
    if graph.rho() == 0.0 {
        return solve_ungrounded(graph, source);
    }

    let n = graph.n();
    let mut is_source = vec![false; n];
    for &i in &source.mask {
        is_source[i] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !is_source[i]).collect();
    let mut local = vec![usize::MAX; n];
    for (li, &i) in free.iter().enumerate() {
        local[i] = li;
    }

    let k = free.len();
    let mut values = vec![1.0; n];
    if k > 0 {
        let mut m = nalgebra::DMatrix::<f64>::zeros(k, k);
        let mut rhs = nalgebra::DVector::<f64>::zeros(k);
        for (li, &i) in free.iter().enumerate() {
            m[(li, li)] = graph.rho() + graph.degree(i);
            for (j, w) in graph.neighbors(i) {
                if is_source[j] {
                    rhs[li] += w;
                } else {
                    m[(li, local[j])] -= w;
                }
            }
        }
        let sol = m
            .lu()
            .solve(&rhs)
            .ok_or(VoltError::SingularSystem("direct oracle LU factorization"))?;
        for (li, &i) in free.iter().enumerate() {
            debug_assert!(
                sol[li] > -1e-8 && sol[li] < 1.0 + 1e-8,
                "oracle value {} escaped [0,1]",
                sol[li]
            );
            values[i] = sol[li].clamp(0.0, 1.0);
        }
    }
    Ok(VoltageFunction {
        values,
        source: source.clone(),
        support: None,
    })
}

/// Support-truncated solve: grow an active set outward from the source,
/// activating the neighbors of any node whose value reaches `tau`, and
/// iterate on the active set with everything else held at 0. Truncation
/// only discards contributions below `tau`, so active values track the full
/// solution within `tau + tol`.
pub fn solve_localized(
    graph: &GroundedGraph,
    source: &SourceRegion,
    cfg: &SolverConfig,
) -> Result<(VoltageFunction, SolveReport)> {
    cfg.validate()?;
    check_source(graph, source)?;
    let tau = match cfg.mode {
        SolveMode::Localized { tau } => tau,
        _ => {
            return Err(VoltError::InvalidSpec {
                field: "solver.mode",
                message: "solve_localized requires SolveMode::Localized".to_string(),
            })
        }
    };
    let start = Instant::now();

    if graph.rho() == 0.0 {
        let mut v = solve_ungrounded(graph, source)?;
        v.support = Some((0..graph.n()).collect());
        let report = SolveReport {
            iterations: 0,
            final_residual: 0.0,
            contraction_ratio_observed: 0.0,
            wall_time: start.elapsed().as_secs_f64(),
            converged: true,
        };
        return Ok((v, report));
    }

    let n = graph.n();
    let mut is_source = vec![false; n];
    for &i in &source.mask {
        is_source[i] = true;
    }
    let mut active = vec![false; n];
    let mut active_list: Vec<usize> = Vec::new();
    for &i in &source.mask {
        active[i] = true;
        active_list.push(i);
    }

    let mut v = vec![0.0; n];
    for &i in &source.mask {
        v[i] = 1.0;
    }
    let mut next = v.clone();

    let mut iterations = 0u64;
    let mut residual;
    let mut prev_residual: Option<f64> = None;
    let mut ratio_max = 0.0f64;
    let mut converged = false;

    loop {
        // Frontier expansion: any active node at or above tau activates its
        // neighbors. Inactive nodes keep value 0, so reading them in the
        // sweep below is exactly the truncation.
        let mut added = false;
        let snapshot = active_list.len();
        for idx in 0..snapshot {
            let i = active_list[idx];
            if v[i] >= tau {
                for (j, _) in graph.neighbors(i) {
                    if !active[j] {
                        active[j] = true;
                        active_list.push(j);
                        added = true;
                    }
                }
            }
        }
        if added {
            prev_residual = None;
        }

        residual = 0.0;
        for &i in &active_list {
            if is_source[i] || graph.degree(i) == 0.0 {
                continue;
            }
            let num: f64 = graph.neighbors(i).map(|(j, w)| w * v[j]).sum();
            let value = num / (graph.rho() + graph.degree(i));
            let change = (value - v[i]).abs();
            if change > residual {
                residual = change;
            }
            next[i] = value;
        }
        for &i in &active_list {
            if !is_source[i] {
                v[i] = next[i];
            }
        }
        iterations += 1;
        if let Some(prev) = prev_residual {
            if prev > 0.0 {
                ratio_max = ratio_max.max(residual / prev);
            }
        }
        prev_residual = Some(residual);

        if !added && residual <= cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            log::warn!(
                "localized solve hit max_iters = {} with residual {residual:.3e}",
                cfg.max_iters
            );
            break;
        }
    }

    let support: Vec<usize> = {
        let mut s: Vec<usize> = active_list.iter().copied().filter(|&i| v[i] >= tau).collect();
        s.sort_unstable();
        s
    };
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
            source: source.clone(),
            support: Some(support),
        },
        report,
    ))
}

/// Dispatch on the configured mode.
pub fn solve(
    graph: &GroundedGraph,
    source: &SourceRegion,
    cfg: &SolverConfig,
) -> Result<(VoltageFunction, SolveReport)> {
    match cfg.mode {
        SolveMode::FullPower => solve_grounded_emv(graph, source, cfg),
        SolveMode::Localized { .. } => solve_localized(graph, source, cfg),
        SolveMode::DirectOracle => {
            let start = Instant::now();
            let v = solve_direct_oracle(graph, source)?;
            let report = SolveReport {
                iterations: 0,
                final_residual: 0.0,
                contraction_ratio_observed: 0.0,
                wall_time: start.elapsed().as_secs_f64(),
                converged: true,
            };
            Ok((v, report))
        }
    }
}

/// Kernel-weighted average extending a solved voltage to off-sample points.
/// Queries inside the source ball return exactly 1; a query with zero
/// kernel mass outside the source has no defined value and yields `None`.
/// A sample point coincident with the query is excluded, so the extension
/// at a node position averages that node's kernel neighbors.
pub fn extend_voltage(
    graph: &GroundedGraph,
    v: &VoltageFunction,
    queries: &Matrix,
) -> Result<Vec<Option<f64>>> {
    let cloud = graph.points()?;
    let kernel = graph.kernel()?;
    if queries.ncols() != cloud.dim() {
        return Err(VoltError::DimensionMismatch {
            expected: cloud.dim(),
            got: queries.ncols(),
        });
    }
    let mut out = Vec::with_capacity(queries.nrows());
    for q in queries.rows() {
        if euclidean(q, &v.source.center) <= v.source.radius {
            out.push(Some(1.0));
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..cloud.n() {
            let d = euclidean(q, cloud.point(i));
            if d == 0.0 {
                continue;
            }
            let k = kernel.eval_distance(d);
            if k > 0.0 {
                num += k * v.values[i];
                den += k;
            }
        }
        out.push(if den > 0.0 { Some(num / den) } else { None });
    }
    Ok(out)
}

/// Plain kernel-weighted interpolation of an arbitrary per-node field onto
/// query points (no source clause). Used to put comparison fields from
/// different samples on a common grid.
pub fn extend_values(
    graph: &GroundedGraph,
    values: &[f64],
    queries: &Matrix,
) -> Result<Vec<Option<f64>>> {
    let cloud = graph.points()?;
    let kernel = graph.kernel()?;
    if values.len() != cloud.n() {
        return Err(VoltError::DimensionMismatch {
            expected: cloud.n(),
            got: values.len(),
        });
    }
    if queries.ncols() != cloud.dim() {
        return Err(VoltError::DimensionMismatch {
            expected: cloud.dim(),
            got: queries.ncols(),
        });
    }
    let mut out = Vec::with_capacity(queries.nrows());
    for q in queries.rows() {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..cloud.n() {
            let k = kernel.eval_distance(euclidean(q, cloud.point(i)));
            if k > 0.0 {
                num += k * values[i];
                den += k;
            }
        }
        out.push(if den > 0.0 { Some(num / den) } else { None });
    }
    Ok(out)
}

/// Single-query extension; the zero-mass case surfaces as an error.
pub fn extend_point(graph: &GroundedGraph, v: &VoltageFunction, query: &[f64]) -> Result<f64> {
    let queries = Matrix::from_rows(&[query.to_vec()])?;
    extend_voltage(graph, v, &queries)?
        .pop()
        .flatten()
        .ok_or(VoltError::UndefinedExtension)
}
