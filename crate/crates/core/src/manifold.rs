//! Benchmark manifolds, kernel similarity functions, and metric helpers.
//!
//! Sampling is deterministic: a `(spec, n, seed)` triple always produces the
//! same cloud, and each point consumes a fixed number of draws in index
//! order, so samples with the same seed are nested (`sample(n)` is a prefix
//! of `sample(2n)`). All kernels act on ambient Euclidean distance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::matrix::{euclidean, Matrix};
use crate::{Result, VoltError};

/// Absolute tolerance for manifold membership checks.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    /// The segment `[lo, hi]` of the real line.
    Interval { lo: f64, hi: f64 },
    /// The unit square `[0,1]^2`.
    UnitSquare,
    /// The unit sphere `S^{d-1}` embedded in `R^d`.
    Sphere { dim: usize },
    /// A sphere with azimuth (angle of the first two coordinates)
    /// restricted to a sub-interval of `[0, 2pi)`.
    SphereSegment {
        dim: usize,
        azimuth_lo: f64,
        azimuth_hi: f64,
    },
    /// A solid ball in `R^d` centered at the origin. The default radius
    /// gives the ball unit volume so that uniform probability mass and
    /// Lebesgue measure coincide.
    Disk { dim: usize, radius: f64 },
}

impl ManifoldSpec {
    /// Radius of the unit-volume ball in `R^d`.
    pub fn unit_volume_disk_radius(dim: usize) -> f64 {
        (1.0 / ball_volume(dim, 1.0)).powf(1.0 / dim as f64)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ManifoldSpec::Interval { lo, hi } => {
                if !(lo < hi) {
                    return Err(VoltError::InvalidSpec {
                        field: "interval",
                        message: format!("requires lo < hi, got lo = {lo}, hi = {hi}"),
                    });
                }
            }
            ManifoldSpec::UnitSquare => {}
            ManifoldSpec::Sphere { dim } => {
                if dim < 2 {
                    return Err(VoltError::InvalidSpec {
                        field: "sphere.dim",
                        message: format!("requires ambient dimension >= 2, got {dim}"),
                    });
                }
            }
            ManifoldSpec::SphereSegment {
                dim,
                azimuth_lo,
                azimuth_hi,
            } => {
                if dim < 2 {
                    return Err(VoltError::InvalidSpec {
                        field: "sphere_segment.dim",
                        message: format!("requires ambient dimension >= 2, got {dim}"),
                    });
                }
                let two_pi = 2.0 * std::f64::consts::PI;
                if !(azimuth_lo < azimuth_hi)
                    || azimuth_lo < 0.0
                    || azimuth_hi >= two_pi
                {
                    return Err(VoltError::InvalidSpec {
                        field: "sphere_segment.azimuth",
                        message: format!(
                            "requires 0 <= lo < hi < 2pi, got [{azimuth_lo}, {azimuth_hi}]"
                        ),
                    });
                }
            }
            ManifoldSpec::Disk { dim, radius } => {
                if dim < 1 {
                    return Err(VoltError::InvalidSpec {
                        field: "disk.dim",
                        message: "requires dimension >= 1".to_string(),
                    });
                }
                if !(radius > 0.0) {
                    return Err(VoltError::InvalidSpec {
                        field: "disk.radius",
                        message: format!("requires radius > 0, got {radius}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Dimension of the ambient space points live in.
    pub fn ambient_dim(&self) -> usize {
        match *self {
            ManifoldSpec::Interval { .. } => 1,
            ManifoldSpec::UnitSquare => 2,
            ManifoldSpec::Sphere { dim } | ManifoldSpec::SphereSegment { dim, .. } => dim,
            ManifoldSpec::Disk { dim, .. } => dim,
        }
    }

    /// Whether distances from a source center should be measured along
    /// great circles rather than chords.
    pub fn is_spherical(&self) -> bool {
        matches!(
            self,
            ManifoldSpec::Sphere { .. } | ManifoldSpec::SphereSegment { .. }
        )
    }

    /// Membership predicate at absolute tolerance [`MEMBERSHIP_TOL`].
    pub fn contains(&self, p: &[f64]) -> bool {
        if p.len() != self.ambient_dim() {
            return false;
        }
        let t = MEMBERSHIP_TOL;
        match *self {
            ManifoldSpec::Interval { lo, hi } => p[0] >= lo - t && p[0] <= hi + t,
            ManifoldSpec::UnitSquare => p.iter().all(|&x| x >= -t && x <= 1.0 + t),
            ManifoldSpec::Sphere { .. } => (norm(p) - 1.0).abs() <= t,
            ManifoldSpec::SphereSegment {
                azimuth_lo,
                azimuth_hi,
                ..
            } => {
                if (norm(p) - 1.0).abs() > t {
                    return false;
                }
                let s = (p[0] * p[0] + p[1] * p[1]).sqrt();
                if s == 0.0 {
                    return true; // azimuth undefined on the axis
                }
                let mut az = p[1].atan2(p[0]);
                if az < 0.0 {
                    az += 2.0 * std::f64::consts::PI;
                }
                az >= azimuth_lo - t && az <= azimuth_hi + t
            }
            ManifoldSpec::Disk { radius, .. } => norm(p) <= radius + t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// Indicator of ambient distance at most `bandwidth`.
    Radial { bandwidth: f64 },
    /// `exp(-d^2 / 2 sigma^2)`.
    Gaussian { sigma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Radial { bandwidth } if !(bandwidth > 0.0) => Err(VoltError::InvalidSpec {
                field: "kernel.bandwidth",
                message: format!("requires bandwidth > 0, got {bandwidth}"),
            }),
            KernelSpec::Gaussian { sigma } if !(sigma > 0.0) => Err(VoltError::InvalidSpec {
                field: "kernel.sigma",
                message: format!("requires sigma > 0, got {sigma}"),
            }),
            _ => Ok(()),
        }
    }

    /// Kernel value for a precomputed distance.
    pub fn eval_distance(&self, d: f64) -> f64 {
        match *self {
            KernelSpec::Radial { bandwidth } => {
                if d <= bandwidth {
                    1.0
                } else {
                    0.0
                }
            }
            KernelSpec::Gaussian { sigma } => (-d * d / (2.0 * sigma * sigma)).exp(),
        }
    }
}

/// Kernel similarity of two points. Symmetric, range `[0, 1]`; the radial
/// kernel returns exactly 0 or 1.
pub fn eval_kernel(kernel: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(VoltError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(kernel.eval_distance(euclidean(x, y)))
}

/// A deterministic i.i.d. sample from a manifold, or raw external points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Matrix,
    manifold: Option<ManifoldSpec>,
    seed: Option<u64>,
}

impl PointCloud {
    /// Wrap externally supplied coordinates (no manifold metadata).
    pub fn from_points(points: Matrix) -> Self {
        PointCloud {
            points,
            manifold: None,
            seed: None,
        }
    }

    /// Attach manifold metadata to loaded coordinates, re-checking the
    /// membership invariant when a manifold is given.
    pub fn with_metadata(
        points: Matrix,
        manifold: Option<ManifoldSpec>,
        seed: Option<u64>,
    ) -> Result<Self> {
        if let Some(spec) = &manifold {
            spec.validate()?;
            for (i, row) in points.rows().enumerate() {
                if !spec.contains(row) {
                    return Err(VoltError::InvalidSpec {
                        field: "points",
                        message: format!("row {i} violates the manifold membership predicate"),
                    });
                }
            }
        }
        Ok(PointCloud {
            points,
            manifold,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn manifold(&self) -> Option<&ManifoldSpec> {
        self.manifold.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Draw `n` points uniformly from `spec`. Identical `(spec, n, seed)` yield
/// bit-identical clouds; sphere directions come from normalized isotropic
/// Gaussians.
pub fn sample_manifold(spec: &ManifoldSpec, n: usize, seed: u64) -> Result<PointCloud> {
    spec.validate()?;
    if n == 0 {
        return Err(VoltError::InvalidSpec {
            field: "n",
            message: "sample size must be at least 1".to_string(),
        });
    }
    let d = spec.ambient_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Matrix::zeros(n, d);
    for i in 0..n {
        let row = points.row_mut(i);
        match *spec {
            ManifoldSpec::Interval { lo, hi } => {
                row[0] = lo + (hi - lo) * rng.random::<f64>();
            }
            ManifoldSpec::UnitSquare => {
                row[0] = rng.random::<f64>();
                row[1] = rng.random::<f64>();
            }
            ManifoldSpec::Sphere { .. } => {
                gaussian_direction(&mut rng, row);
            }
            ManifoldSpec::SphereSegment {
                azimuth_lo,
                azimuth_hi,
                ..
            } => {
                // Azimuth is independent of the remaining coordinates under
                // the uniform measure, so restricting it to the segment is a
                // matter of redrawing the angle alone.
                gaussian_direction(&mut rng, row);
                let s = (row[0] * row[0] + row[1] * row[1]).sqrt();
                let az = azimuth_lo + (azimuth_hi - azimuth_lo) * rng.random::<f64>();
                row[0] = s * az.cos();
                row[1] = s * az.sin();
            }
            ManifoldSpec::Disk { dim, radius } => {
                gaussian_direction(&mut rng, row);
                let scale = radius * rng.random::<f64>().powf(1.0 / dim as f64);
                for x in row.iter_mut() {
                    *x *= scale;
                }
            }
        }
    }
    Ok(PointCloud {
        points,
        manifold: Some(spec.clone()),
        seed: Some(seed),
    })
}

fn gaussian_direction(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    loop {
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let nrm = norm(out);
        if nrm > 0.0 {
            for x in out.iter_mut() {
                *x /= nrm;
            }
            return;
        }
    }
}

fn norm(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Angle subtending a chord of length `r` on the unit circle: `2 asin(r/2)`.
pub fn chord_to_angle(r: f64) -> Result<f64> {
    if !(r > 0.0 && r <= 2.0) {
        return Err(VoltError::InvalidSpec {
            field: "chord",
            message: format!("chord length must lie in (0, 2], got {r}"),
        });
    }
    Ok(2.0 * (r / 2.0).asin())
}

/// Chord length subtended by an angle on the unit circle (inverse of
/// [`chord_to_angle`]).
pub fn angle_to_chord(theta: f64) -> f64 {
    2.0 * (theta / 2.0).sin()
}

/// Great-circle distance between two unit vectors, `arccos` of the clamped
/// inner product.
pub fn geodesic_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(VoltError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    for (name, p) in [("x", x), ("y", y)] {
        if (norm(p) - 1.0).abs() > 1e-9 {
            return Err(VoltError::InvalidSpec {
                field: "unit_vector",
                message: format!("{name} has norm {} (must be 1 within 1e-9)", norm(p)),
            });
        }
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok(dot.clamp(-1.0, 1.0).acos())
}

/// Volume of the `d`-ball of radius `r`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    // V_d = pi^{d/2} / Gamma(d/2 + 1) via the two-step recurrence
    // V_d = V_{d-2} * 2 pi / d, with V_0 = 1, V_1 = 2.
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v * r.powi(d as i32)
}
