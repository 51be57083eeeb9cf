//! Pass thresholds used by the integration and acceptance tests.

use pcrnet::nncore::REAL_DTYPE;

/// Hungarian EMD against the exhaustive minimum.
pub const EMD_EXACT: f64 = 1e-12;

/// Finite-difference agreement for the 32-bit network kernel.
pub const GRAD_REL_F32: f64 = 1e-3;
/// Finite-difference agreement when the kernel is built with 64-bit floats.
pub const GRAD_REL_F64: f64 = 1e-6;

pub fn grad_rel_tol() -> f64 {
    if REAL_DTYPE == "f64" {
        GRAD_REL_F64
    } else {
        GRAD_REL_F32
    }
}

/// Finite-difference step for the network kernel, near the cube root of
/// machine epsilon where truncation and rounding error balance.
pub fn grad_step() -> f64 {
    if REAL_DTYPE == "f64" {
        1e-6
    } else {
        5e-3
    }
}

/// Noiseless SVD fit.
pub const KABSCH_ROT_DEG: f64 = 1e-6;
pub const KABSCH_TRANS: f64 = 1e-9;

/// ICP on small noiseless misalignments.
pub const ICP_ROT_DEG: f64 = 0.1;
/// Allowed rise in ICP correspondence MSE between iterations.
pub const ICP_MSE_SLACK: f64 = 1e-12;

/// One-model overfit gates.
pub const OVERFIT_ROT_MEAN_DEG: f64 = 5.0;
pub const OVERFIT_AUC: f64 = 0.95;

/// Resolution of the 1° success-curve grid.
pub const AUC_GRID: f64 = 1.0 / 180.0;

/// Recomposed per-iteration chain against the returned transform.
pub const COMPOSITION: f64 = 1e-9;
