//! Profiles, decay envelopes, support radii, and convergence studies.
//!
//! On radially symmetric geometries the solved voltage is a function of the
//! distance to the source center alone, squeezed between two exponential
//! envelopes whose rates depend only on the ground-to-kernel-mass ratio.
//! This module bins voltages into empirical profiles, evaluates the
//! theoretical envelopes (the lower one needs a ball-intersection constant
//! estimated by Monte Carlo), turns a threshold into an effective support
//! radius with two-sided bounds, and measures how solutions settle as the
//! sample grows.
//!
//! Measure convention: kernel-ball masses (`a`, `Gamma`) are taken under
//! the unit-mass sampling distribution, matching the graph normalization
//! in which per-node weight sums converge to the kernel integral. The disk
//! geometry therefore assumes a unit-volume domain (use
//! [`ManifoldSpec::unit_volume_disk_radius`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{build_grounded_graph, select_source};
use crate::manifold::{
    ball_volume, chord_to_angle, geodesic_distance, sample_manifold, KernelSpec, ManifoldSpec,
    PointCloud,
};
use crate::matrix::{euclidean, Matrix};
use crate::solver::{extend_voltage, solve_grounded_emv, SolverConfig, VoltageFunction};
use crate::{Result, VoltError};

/// Monte Carlo sample count for the ball-intersection constant.
pub const GAMMA_MC_SAMPLES: usize = 1_000_000;
const GAMMA_MC_SEED: u64 = 0x5bd1e995;

/// Binned voltage-versus-distance curve. Distances are geodesic on
/// spheres, Euclidean otherwise. Empty bins carry count 0 and a NaN mean
/// (written as `null` in JSON and read back as NaN).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialProfile {
    pub bin_edges: Vec<f64>,
    #[serde(with = "nan_as_null")]
    pub bin_mean: Vec<f64>,
    pub bin_count: Vec<usize>,
    #[serde(with = "nan_as_null")]
    pub bin_stddev: Vec<f64>,
    pub source_radius: f64,
    pub geodesic: bool,
}

/// serde_json writes non-finite floats as `null` but refuses to read null
/// back into f64; this codec keeps the NaN-means-empty convention intact
/// across a JSON round trip.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opts: Vec<Option<f64>> = v
            .iter()
            .map(|&x| if x.is_nan() { None } else { Some(x) })
            .collect();
        opts.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opts: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(opts.into_iter().map(|o| o.unwrap_or(f64::NAN)).collect())
    }
}

impl RadialProfile {
    pub fn n_bins(&self) -> usize {
        self.bin_count.len()
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        0.5 * (self.bin_edges[b] + self.bin_edges[b + 1])
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    /// Standard error of its mean, for nonempty bins.
    pub fn bin_stderr(&self, b: usize) -> f64 {
        if self.bin_count[b] == 0 {
            f64::NAN
        } else {
            self.bin_stddev[b] / (self.bin_count[b] as f64).sqrt()
        }
    }

    /// Mean of the bin containing distance `z`, if that bin is nonempty.
    pub fn mean_at(&self, z: f64) -> Option<f64> {
        let max = *self.bin_edges.last().unwrap();
        if z < 0.0 || z > max {
            return None;
        }
        let b = ((z / max * self.n_bins() as f64) as usize).min(self.n_bins() - 1);
        if self.bin_count[b] == 0 {
            None
        } else {
            Some(self.bin_mean[b])
        }
    }
}

/// Equal-width bins of voltage against distance from `center`.
pub fn radial_profile(
    cloud: &PointCloud,
    v: &VoltageFunction,
    center: &[f64],
    n_bins: usize,
) -> Result<RadialProfile> {
    if n_bins < 2 {
        return Err(VoltError::InvalidSpec {
            field: "profile.n_bins",
            message: format!("need at least 2 bins, got {n_bins}"),
        });
    }
    if v.values.len() != cloud.n() {
        return Err(VoltError::DimensionMismatch {
            expected: cloud.n(),
            got: v.values.len(),
        });
    }
    let geodesic = cloud.manifold().is_some_and(ManifoldSpec::is_spherical);
    let dist = |i: usize| -> Result<f64> {
        if geodesic {
            geodesic_distance(cloud.point(i), center)
        } else {
            Ok(euclidean(cloud.point(i), center))
        }
    };
    let mut distances = Vec::with_capacity(cloud.n());
    let mut max_dist = 0.0f64;
    for i in 0..cloud.n() {
        let d = dist(i)?;
        max_dist = max_dist.max(d);
        distances.push(d);
    }
    if max_dist == 0.0 {
        return Err(VoltError::InvalidSpec {
            field: "profile",
            message: "all points coincide with the center".to_string(),
        });
    }

    let mut count = vec![0usize; n_bins];
    let mut sum = vec![0.0f64; n_bins];
    let mut sum_sq = vec![0.0f64; n_bins];
    for (i, &d) in distances.iter().enumerate() {
        let b = ((d / max_dist * n_bins as f64) as usize).min(n_bins - 1);
        count[b] += 1;
        sum[b] += v.values[i];
        sum_sq[b] += v.values[i] * v.values[i];
    }
    let mut mean = vec![f64::NAN; n_bins];
    let mut stddev = vec![f64::NAN; n_bins];
    for b in 0..n_bins {
        if count[b] > 0 {
            let m = sum[b] / count[b] as f64;
            mean[b] = m;
            stddev[b] = if count[b] > 1 {
                ((sum_sq[b] - count[b] as f64 * m * m).max(0.0) / (count[b] as f64 - 1.0)).sqrt()
            } else {
                0.0
            };
        }
    }
    let bin_edges = (0..=n_bins)
        .map(|b| b as f64 * max_dist / n_bins as f64)
        .collect();
    Ok(RadialProfile {
        bin_edges,
        bin_mean: mean,
        bin_count: count,
        bin_stddev: stddev,
        source_radius: v.source.radius,
        geodesic,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneViolation {
    pub from_bin: usize,
    pub to_bin: usize,
    pub increase: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport {
    pub ok: bool,
    pub violations: Vec<MonotoneViolation>,
}

/// Flag consecutive nonempty bins beyond the source radius whose mean
/// increases by more than `slack`.
pub fn check_monotone(profile: &RadialProfile, slack: f64) -> MonotoneReport {
    let mut violations = Vec::new();
    let mut prev: Option<(usize, f64)> = None;
    for b in 0..profile.n_bins() {
        if profile.bin_count[b] == 0 || profile.bin_center(b) <= profile.source_radius {
            continue;
        }
        if let Some((pb, pm)) = prev {
            let inc = profile.bin_mean[b] - pm;
            if inc > slack {
                violations.push(MonotoneViolation {
                    from_bin: pb,
                    to_bin: b,
                    increase: inc,
                });
            }
        }
        prev = Some((b, profile.bin_mean[b]));
    }
    MonotoneReport {
        ok: violations.is_empty(),
        violations,
    }
}

/// The geometry a decay bound is stated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Unit sphere `S^{d-1}` in `R^d`; distances are geodesic.
    Sphere { dim: usize },
    /// Ball in `R^d` of unit volume; distances are Euclidean.
    Disk { dim: usize },
}

/// Exponential envelopes for the radial decay, evaluated at
/// `z = t * step` from the source center.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayBounds {
    /// Kernel-ball mass under the sampling distribution.
    pub a: f64,
    /// Worst-case mass of the kernel ball's inward overlap, from Monte
    /// Carlo, with its standard error.
    pub gamma: f64,
    pub gamma_stderr: f64,
    /// Profile step per envelope unit: the kernel radius in geodesic terms
    /// on the sphere, the radius itself on the disk.
    pub step: f64,
    pub upper_rate: f64,
    pub lower_rate: f64,
    pub geometry: Geometry,
    pub r: f64,
    pub rho: f64,
}

impl DecayBounds {
    /// Upper envelope after `t` steps. Only applies from `2r` outward.
    pub fn upper_envelope(&self, t: u32) -> f64 {
        (-(t as f64) * self.upper_rate).exp()
    }

    /// Whether the upper bound is claimed at distance `z`.
    pub fn upper_applies_at(&self, z: f64) -> bool {
        z >= 2.0 * self.r
    }

    /// Lower envelope after `t` steps; the disk version decays with
    /// exponent `2t`.
    pub fn lower_envelope(&self, t: u32) -> f64 {
        let mult = match self.geometry {
            Geometry::Sphere { .. } => 1.0,
            Geometry::Disk { .. } => 2.0,
        };
        (-mult * t as f64 * self.lower_rate).exp()
    }

    /// Lower envelope with the Monte Carlo uncertainty folded in (gamma
    /// shrunk by three standard errors, which can only lower the curve).
    pub fn lower_envelope_conservative(&self, t: u32) -> f64 {
        let gamma = (self.gamma - 3.0 * self.gamma_stderr).max(self.gamma * 1e-3);
        let rate = ((self.a + self.rho) / gamma).ln();
        let mult = match self.geometry {
            Geometry::Sphere { .. } => 1.0,
            Geometry::Disk { .. } => 2.0,
        };
        (-mult * t as f64 * rate).exp()
    }
}

/// Compute the envelope constants for a kernel radius and ground weight.
/// `a` has a closed form (ball volume or spherical-cap mass); the
/// intersection constant `Gamma` is estimated by Monte Carlo at the
/// worst-case placement, one kernel step from the source.
pub fn theoretical_bounds(r: f64, rho: f64, geometry: Geometry, _r_s: f64) -> Result<DecayBounds> {
    if !(r > 0.0) || !(rho > 0.0) {
        return Err(VoltError::InvalidSpec {
            field: "bounds",
            message: format!("need r > 0 and rho > 0, got r = {r}, rho = {rho}"),
        });
    }
    match geometry {
        Geometry::Sphere { dim } if dim < 2 => {
            return Err(VoltError::InvalidSpec {
                field: "bounds.geometry",
                message: "sphere bounds need ambient dimension >= 2".to_string(),
            })
        }
        Geometry::Disk { dim } if dim < 1 => {
            return Err(VoltError::InvalidSpec {
                field: "bounds.geometry",
                message: "disk bounds need dimension >= 1".to_string(),
            })
        }
        _ => {}
    }
    let (a, step) = match geometry {
        Geometry::Disk { dim } => (ball_volume(dim, r), r),
        Geometry::Sphere { dim } => {
            let phi = chord_to_angle(r)?;
            (cap_mass(dim, phi), phi)
        }
    };
    let (gamma, gamma_stderr) = estimate_gamma(r, geometry, a)?;
    let upper_rate = (1.0 + 2.0 * rho / a).ln();
    let lower_rate = ((a + rho) / gamma).ln();
    Ok(DecayBounds {
        a,
        gamma,
        gamma_stderr,
        step,
        upper_rate,
        lower_rate,
        geometry,
        r,
        rho,
    })
}

/// Mass of the spherical cap of polar angle `phi` on `S^{d-1}`, as a
/// fraction of the whole sphere: the ratio of `sin^{d-2}` integrals.
fn cap_mass(dim: usize, phi: f64) -> f64 {
    let p = (dim as i32) - 2;
    let f = |t: f64| t.sin().powi(p);
    simpson(f, 0.0, phi, 4096) / simpson(f, 0.0, std::f64::consts::PI, 4096)
}

fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + k as f64 * h);
    }
    acc * h / 3.0
}

/// Monte Carlo estimate of the inward-overlap mass: the part of the kernel
/// ball around a point one kernel step from the source that lies at least
/// half a step closer in. Returns `(gamma, stderr)` in the same units as
/// `a`.
fn estimate_gamma(r: f64, geometry: Geometry, a: f64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(GAMMA_MC_SEED);
    let n = GAMMA_MC_SAMPLES;
    let mut hits = 0usize;
    match geometry {
        Geometry::Disk { dim } => {
            // Center x at distance r from the origin along the first axis;
            // count uniform draws from B(x, r) with |y| <= r/2.
            let mut y = vec![0.0f64; dim];
            for _ in 0..n {
                gaussian_unit(&mut rng, &mut y);
                let scale = r * rng.random::<f64>().powf(1.0 / dim as f64);
                for c in y.iter_mut() {
                    *c *= scale;
                }
                y[0] += r;
                if y.iter().map(|c| c * c).sum::<f64>().sqrt() <= r / 2.0 {
                    hits += 1;
                }
            }
        }
        Geometry::Sphere { dim } => {
            let phi_r = chord_to_angle(r)?;
            let phi_half = chord_to_angle(r / 2.0)?;
            let threshold = phi_r - phi_half;
            // Pole at e1, cap center x at geodesic phi(r) from it.
            let mut x = vec![0.0f64; dim];
            x[0] = phi_r.cos();
            x[1] = phi_r.sin();
            let p = (dim as i32) - 2;
            let theta_density_max = phi_r.min(std::f64::consts::FRAC_PI_2).sin().powi(p).max(1e-300);
            let mut g = vec![0.0f64; dim];
            for _ in 0..n {
                // theta ~ sin^{d-2} on [0, phi(r)] by rejection, direction
                // uniform in the tangent sphere at x.
                let theta = loop {
                    let t = phi_r * rng.random::<f64>();
                    let accept: f64 = rng.random();
                    if accept * theta_density_max <= t.sin().powi(p) {
                        break t;
                    }
                };
                let w = loop {
                    gaussian_unit(&mut rng, &mut g);
                    let dot: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
                    let mut w: Vec<f64> = g.iter().zip(&x).map(|(a, b)| a - dot * b).collect();
                    let nrm = w.iter().map(|c| c * c).sum::<f64>().sqrt();
                    if nrm > 0.0 {
                        for c in w.iter_mut() {
                            *c /= nrm;
                        }
                        break w;
                    }
                };
                // y = cos(theta) x + sin(theta) w; geodesic distance to the
                // pole is arccos(y[0]).
                let y0 = theta.cos() * x[0] + theta.sin() * w[0];
                if y0.clamp(-1.0, 1.0).acos() <= threshold {
                    hits += 1;
                }
            }
        }
    }
    let frac = hits as f64 / n as f64;
    if frac == 0.0 {
        return Err(VoltError::SingularSystem(
            "Monte Carlo produced an empty intersection; kernel radius too small for the geometry",
        ));
    }
    let stderr = a * (frac * (1.0 - frac) / n as f64).sqrt();
    Ok((a * frac, stderr))
}

fn gaussian_unit(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    loop {
        for c in out.iter_mut() {
            *c = rng.sample(StandardNormal);
        }
        let nrm = out.iter().map(|c| c * c).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for c in out.iter_mut() {
                *c /= nrm;
            }
            return;
        }
    }
}

/// Where the profile last clears `tau`, against the theoretical window.
#[derive(Debug, Clone, Serialize)]
pub struct SupportReport {
    pub tau: f64,
    pub r_supp_empirical: f64,
    pub r_l: f64,
    pub r_u: f64,
    /// Set when no bin beyond the source reaches `tau`; the empirical
    /// radius then degenerates to the source radius.
    pub degenerate: bool,
}

/// Largest bin center whose mean still reaches `tau`, with the two-sided
/// theoretical window from the decay envelopes.
pub fn support_radius(profile: &RadialProfile, tau: f64, bounds: &DecayBounds) -> Result<SupportReport> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(VoltError::InvalidSpec {
            field: "support.tau",
            message: format!("must lie in (0, 1), got {tau}"),
        });
    }
    let log_inv_tau = (1.0 / tau).ln();
    let r_l = (bounds.r / 2.0) * log_inv_tau / bounds.lower_rate;
    let r_u = bounds.r * log_inv_tau / (1.0 + bounds.rho / bounds.a).ln();

    let mut r_supp = None;
    for b in 0..profile.n_bins() {
        if profile.bin_count[b] > 0 && profile.bin_mean[b] >= tau {
            r_supp = Some(profile.bin_center(b));
        }
    }
    let (r_supp_empirical, degenerate) = match r_supp {
        Some(r) if r > profile.source_radius => (r, false),
        _ => (profile.source_radius, true),
    };
    Ok(SupportReport {
        tau,
        r_supp_empirical,
        r_l,
        r_u,
        degenerate,
    })
}

/// One sample-size ladder of a convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
    /// `[seed][n]` extended values on the evaluation grid (`None` where the
    /// extension is undefined).
    pub grids: Vec<Vec<Vec<Option<f64>>>>,
    /// `[seed][pair]` sup of |v_n - v_next| over jointly defined points.
    pub sup_diff: Vec<Vec<f64>>,
    /// `[seed][pair]` mean absolute difference.
    pub mean_diff: Vec<Vec<f64>>,
    /// Per seed, grid points excluded from at least one comparison.
    pub excluded: Vec<usize>,
    pub median_sup: Vec<f64>,
    pub median_mean: Vec<f64>,
}

/// Sample, build, solve, and extend at each `n` and seed; report how fast
/// successive solutions approach each other on a fixed grid.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    manifold: &ManifoldSpec,
    kernel: &KernelSpec,
    rho_g: f64,
    source_center: &[f64],
    source_radius: f64,
    n_list: &[usize],
    eval_grid: &Matrix,
    seeds: &[u64],
    cfg: &SolverConfig,
) -> Result<ConvergenceReport> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(VoltError::InvalidSpec {
            field: "convergence.n_list",
            message: "sample sizes must be strictly increasing".to_string(),
        });
    }
    let per_seed: Vec<Result<Vec<Vec<Option<f64>>>>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut grids = Vec::with_capacity(n_list.len());
            for &n in n_list {
                let cloud = sample_manifold(manifold, n, seed)?;
                let graph = build_grounded_graph(&cloud, kernel, rho_g)?;
                let source = select_source(&cloud, source_center, source_radius)?;
                let (v, _) = solve_grounded_emv(&graph, &source, cfg)?;
                grids.push(extend_voltage(&graph, &v, eval_grid)?);
            }
            Ok(grids)
        })
        .collect();
    let grids: Vec<Vec<Vec<Option<f64>>>> = per_seed.into_iter().collect::<Result<_>>()?;

    let mut sup_diff = Vec::with_capacity(seeds.len());
    let mut mean_diff = Vec::with_capacity(seeds.len());
    let mut excluded = Vec::with_capacity(seeds.len());
    for ladder in &grids {
        let mut sups = Vec::new();
        let mut means = Vec::new();
        let mut missing = 0usize;
        for pair in ladder.windows(2) {
            let mut sup = 0.0f64;
            let mut acc = 0.0f64;
            let mut cnt = 0usize;
            for (a, b) in pair[0].iter().zip(&pair[1]) {
                match (a, b) {
                    (Some(x), Some(y)) => {
                        let d = (x - y).abs();
                        sup = sup.max(d);
                        acc += d;
                        cnt += 1;
                    }
                    _ => missing += 1,
                }
            }
            sups.push(sup);
            means.push(if cnt > 0 { acc / cnt as f64 } else { f64::NAN });
        }
        sup_diff.push(sups);
        mean_diff.push(means);
        excluded.push(missing);
    }

    let pairs = n_list.len().saturating_sub(1);
    let median_sup = (0..pairs)
        .map(|p| median(sup_diff.iter().map(|s| s[p])))
        .collect();
    let median_mean = (0..pairs)
        .map(|p| median(mean_diff.iter().map(|s| s[p])))
        .collect();
    Ok(ConvergenceReport {
        n_list: n_list.to_vec(),
        seeds: seeds.to_vec(),
        grids,
        sup_diff,
        mean_diff,
        excluded,
        median_sup,
        median_mean,
    })
}

/// Middle order statistic (upper middle for even counts).
pub fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}
