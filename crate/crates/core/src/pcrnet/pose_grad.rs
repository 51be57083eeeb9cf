//! Differentiable application of a raw 7-vector pose to a point set.

use nalgebra::{Matrix3, Point3, Vector3};

use super::POSE_SIZE;
use crate::geometry::{quat_to_rotmat, Pose7, Quaternion, RigidTransform, DEGENERATE_QUAT_NORM};
use crate::nncore::Real;

/// Forward values of `x ↦ R(q̂) x + t` for `q̂ = q_raw / ‖q_raw‖`.
#[derive(Debug, Clone)]
pub struct PoseForward {
    quat: Quaternion,
    raw_norm: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl PoseForward {
    pub fn new(raw: &[Real; POSE_SIZE]) -> Self {
        let pose = Pose7::from_slice(raw).expect("7 values");
        let raw_norm = pose.quat_raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let quat = crate::geometry::quat_normalize(pose.quat_raw);
        Self {
            quat,
            raw_norm,
            rotation: quat_to_rotmat(&quat),
            translation: Vector3::from(pose.translation),
        }
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform::from_parts(self.rotation, self.translation)
    }

    pub fn apply(&self, points: &[Point3<f64>]) -> Vec<Point3<f64>> {
        points
            .iter()
            .map(|p| Point3::from(self.rotation * p.coords + self.translation))
            .collect()
    }
}

/// Gradient of `R(q) ↦ L` pulled back to the four quaternion components.
fn rotmat_backward(q: &Quaternion, g: &Matrix3<f64>) -> [f64; 4] {
    let Quaternion { w, x, y, z } = *q;
    let gw = 2.0 * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)] + x * g[(2, 1)]);
    let gx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)]
            + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let gy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)] - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let gz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)] - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    [gw, gx, gy, gz]
}

/// Back-propagate through `y_i = R x_i + t`. Returns the gradient with respect
/// to the raw pose `[t, q_raw]` and to each input point.
pub fn apply_pose_backward(
    pose: &PoseForward,
    input: &[Point3<f64>],
    d_out: &[Vector3<f64>],
) -> ([f64; POSE_SIZE], Vec<Vector3<f64>>) {
    let mut d_t = Vector3::zeros();
    let mut d_r = Matrix3::zeros();
    let rt = pose.rotation.transpose();
    let d_in = input
        .iter()
        .zip(d_out)
        .map(|(x, dy)| {
            d_t += dy;
            d_r += dy * x.coords.transpose();
            rt * dy
        })
        .collect();

    let mut d_pose = [0.0; POSE_SIZE];
    d_pose[..3].copy_from_slice(d_t.as_slice());
    if pose.raw_norm >= DEGENERATE_QUAT_NORM {
        let dq = rotmat_backward(&pose.quat, &d_r);
        let q = pose.quat.as_array();
        let dot: f64 = q.iter().zip(&dq).map(|(a, b)| a * b).sum();
        for k in 0..4 {
            d_pose[3 + k] = (dq[k] - q[k] * dot) / pose.raw_norm;
        }
    }
    (d_pose, d_in)
}
