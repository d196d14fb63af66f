//! Rank-constrained affine matrix feasibility: residuals, slopes,
//! explicit Łojasiewicz exponents, and distance estimates.
//!
//! The feasible set is `S = {X : A(X) = b, rank(X) <= r}`. This crate
//! computes the residual `f(X)` (tail singular values plus affine
//! violation), its smooth Stiefel lift `g(X, V)`, certified lower bounds
//! on the slope `m_f(X)`, the explicit exponent `tau = 1 / (4 * 9^{l-1})`
//! in exact and log scale, and certified upper bounds on `dist(X, S)`
//! via multistart alternating projections. A sweep harness measures the
//! empirical Hölder error-bound and Łojasiewicz exponents along rays
//! from planted feasible points and checks them against the theoretical
//! bounds.
//!
//! Everything stochastic is keyed by explicit `(seed, stream)` pairs, so
//! outputs are reproducible byte-for-byte, including under parallel
//! execution.

pub mod distance;
pub mod error;
pub mod exponent;
pub mod instance;
pub mod mat_serde;
pub mod probes;
pub mod residual;
pub mod rng;
pub mod sweep;
pub mod variational;

/// Version of the file and report formats emitted by this crate.
pub const SPEC_VERSION: &str = "1";

pub use distance::{dist_estimate, project_affine, project_rank, AffineProjector, DistCfg, DistReport};
pub use error::{Error, Result};
pub use exponent::{r_value, tau, tau_variable_count, LinearValue, LogScalar};
pub use instance::{
    apply_adjoint, apply_map, generate_planted, read_point, write_point, Instance, InstanceFile,
    MapKind, MapSpec, PlantedWitness, PointFile,
};
pub use probes::{
    probe_regularity, probe_stability, projector_distance, RegularityCfg, RegularityReport,
    StabilityCfg, StabilityReport,
};
pub use residual::{
    argmin_frames, is_stiefel, lift_g, residual_f, FrameFamily, ResidualReport, DEFAULT_GAP_TOL,
};
pub use sweep::{
    check_bounds, check_bounds_median, fit_loglog, fit_rows, rows_from_csv, sweep_local,
    sweep_rays, CheckReport, Column, FitResult, GridSpec, MedianCheckReport, SweepCfg, SweepMeta,
    SweepRow, SweepTable, CSV_HEADER, NOISE_FLOOR, WITNESS_FEAS_TOL,
};
pub use variational::{grad_g_v, grad_g_x, multiplier_y, slope_mf, SlopeCfg, SlopeMethod, SlopeReport};
