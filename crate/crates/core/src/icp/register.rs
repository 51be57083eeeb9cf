//! The ICP loop: match, fit, move, until the update stops changing the pose.

use std::time::Instant;

use super::{kabsch_points, KdTree};
use crate::error::{Error, Result};
use crate::geometry::{compose, convergence_delta, RigidTransform};
use crate::meshio::PointCloud;
use crate::pcrnet::RegistrationResult;

pub const DEFAULT_ICP_MAX_ITER: usize = 100;
pub const DEFAULT_ICP_EPS: f64 = 1e-7;

/// Registration result plus the mean squared correspondence distance seen
/// at the start of every iteration.
#[derive(Debug, Clone)]
pub struct IcpTrace {
    pub result: RegistrationResult,
    pub mse: Vec<f64>,
}

pub fn icp_register(
    source: &PointCloud,
    template: &PointCloud,
    max_iter: usize,
    eps: f64,
) -> Result<RegistrationResult> {
    icp_register_traced(source, template, max_iter, eps).map(|t| t.result)
}

pub fn icp_register_traced(source: &PointCloud, template: &PointCloud, max_iter: usize, eps: f64) -> Result<IcpTrace> {
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let start = Instant::now();
    let tree = KdTree::new(template.points());
    let mut current = source.points().to_vec();
    let mut matched = Vec::with_capacity(current.len());
    let mut total = RigidTransform::identity();
    let mut per_iteration = Vec::new();
    let mut mse = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        matched.clear();
        let mut sq = 0.0;
        for p in &current {
            let (j, d) = tree.nearest(p).ok_or(Error::EmptyCloud)?;
            matched.push(template.points()[j]);
            sq += d;
        }
        mse.push(sq / current.len() as f64);
        let step = kabsch_points(&current, &matched)?;
        for p in current.iter_mut() {
            *p = step.apply_point(p);
        }
        let next = compose(&step, &total);
        let delta = convergence_delta(&next, &total);
        per_iteration.push(step);
        total = next;
        if delta < eps {
            converged = true;
            break;
        }
    }
    Ok(IcpTrace {
        result: RegistrationResult {
            transform: total,
            iterations_used: per_iteration.len(),
            per_iteration,
            converged,
            elapsed_secs: start.elapsed().as_secs_f64(),
        },
        mse,
    })
}
