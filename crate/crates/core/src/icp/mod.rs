//! Point-to-point ICP baseline.

mod kabsch;
mod kdtree;
mod register;

pub use kabsch::{kabsch_best_fit, kabsch_points};
pub use kdtree::{nearest_linear, KdTree};
pub use register::{icp_register, icp_register_traced, IcpTrace, DEFAULT_ICP_EPS, DEFAULT_ICP_MAX_ITER};
