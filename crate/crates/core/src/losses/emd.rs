//! Earth Mover Distance between equal-size clouds under the optimal bijection.

use nalgebra::Vector3;

use super::{hungarian, LossValue};
use crate::error::{Error, Result};
use crate::meshio::PointCloud;

fn check_sizes(est: &PointCloud, template: &PointCloud) -> Result<()> {
    if est.is_empty() || template.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if est.len() != template.len() {
        return Err(Error::SizeMismatch {
            left: est.len(),
            right: template.len(),
        });
    }
    Ok(())
}

/// Optimal bijection from `est` onto `template` under Euclidean cost.
pub fn emd_assignment(est: &PointCloud, template: &PointCloud) -> Result<Vec<usize>> {
    check_sizes(est, template)?;
    let n = est.len();
    let mut cost = Vec::with_capacity(n * n);
    for p in est.points() {
        cost.extend(template.points().iter().map(|q| (p - q).norm()));
    }
    hungarian(&cost, n)
}

/// Mean matched distance `(1/N) Σ ‖x − ψ(x)‖` and its gradient with respect
/// to `est`, holding the assignment fixed. Coincident pairs get zero gradient.
pub fn emd(est: &PointCloud, template: &PointCloud) -> Result<LossValue> {
    let assign = emd_assignment(est, template)?;
    let n = est.len() as f64;
    let mut value = 0.0;
    let grad = est
        .points()
        .iter()
        .zip(&assign)
        .map(|(p, &j)| {
            let diff = p - template.points()[j];
            let d = diff.norm();
            value += d;
            if d > 0.0 {
                diff / (n * d)
            } else {
                Vector3::zeros()
            }
        })
        .collect();
    Ok(LossValue { value: value / n, grad })
}
