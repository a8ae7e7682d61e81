//! Grounded voltage functions on graphs built from point clouds.
//!
//! The pipeline: sample a manifold, connect nearby points into a sparse
//! resistor graph with a universal ground edge at every node, pin a small
//! source region to potential 1, and solve for the energy-minimizing voltage.
//! The ground forces the solution to decay away from the source, so each
//! solve is local, independent of every other solve, and stable as the
//! sample grows. Stacking the voltages of a few landmark sources gives a
//! low-dimensional embedding; classical effective-resistance constructions
//! are included as baselines because their point-to-point limit degenerates
//! on exactly these graphs.
//!
//! Module map:
//! - [`manifold`]: benchmark manifolds, kernel functions, metric helpers
//! - [`graph`]: grounded resistor graph construction and source regions
//! - [`solver`]: power-method, direct, and support-truncated voltage solves
//! - [`baseline`]: PM / RegionER / DensityER / ER comparison fields
//! - [`embed`]: landmark selection, voltage embeddings, MDS, Procrustes
//! - [`analysis`]: radial profiles, decay envelopes, support radii,
//!   convergence studies
//! - [`io`]: CSV / JSON round-trip formats shared by the CLI

pub mod analysis;
pub mod baseline;
pub mod embed;
pub mod error;
pub mod graph;
pub mod io;
pub mod manifold;
pub mod matrix;
pub mod solver;

pub use error::VoltError;
pub use matrix::Matrix;

/// Shorthand result type used across the crate.
pub type Result<T> = std::result::Result<T, VoltError>;
