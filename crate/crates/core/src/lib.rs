//! Rigid point cloud registration with PointNet global features.
//!
//! The crate bundles everything needed to train and evaluate a
//! PCRNet-style registration network on the CPU:
//!
//! - [`geometry`]: SE(3) transforms, quaternions, random poses and error metrics
//! - [`meshio`]: OFF meshes, area-weighted and farthest-point sampling, cloud files
//! - [`nncore`]: a small fixed-topology network kernel with hand-written backward passes
//! - [`encoder`]: the shared per-point MLP + max-pool global feature
//! - [`pcrnet`]: single-shot and iterative registration heads
//! - [`losses`]: exact Earth Mover Distance (Hungarian assignment) and Chamfer distance
//! - [`icp`]: point-to-point ICP with a kd-tree and SVD best fit
//! - [`trainer`]: synthetic pair generation, training loop, checkpoints
//! - [`evalkit`]: success curves, AUC, benchmark reports
//! - [`cli`]: the `pcrnet` command line tool

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod geometry;
pub mod icp;
pub mod losses;
pub mod meshio;
pub mod nncore;
pub mod pcrnet;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{Pose7, Quaternion, RigidTransform};
pub use meshio::{Mesh, PointCloud};
pub use nncore::Real;

#[cfg(test)]
pub(crate) mod testutil;
