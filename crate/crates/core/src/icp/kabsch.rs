//! Least-squares rigid fit between corresponding point sets.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::meshio::PointCloud;

/// Relative size of the second singular value below which the
/// correspondence set counts as collinear.
const RANK_TOL: f64 = 1e-10;

/// Rigid transform minimising `Σ ‖R src_i + t − dst_i‖²`.
pub fn kabsch_points(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::SizeMismatch {
            left: src.len(),
            right: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 correspondences, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let h = src.iter().zip(dst).fold(Matrix3::zeros(), |h, (s, d)| {
        h + (s.coords - cs) * (d.coords - cd).transpose()
    });

    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= RANK_TOL * sv[0] {
        return Err(Error::Degenerate("correspondences are collinear or coincident".into()));
    }
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let translation = cd - rotation * cs;
    RigidTransform::new(rotation, translation)
}

/// [`kabsch_points`] on index pairs `(source index, destination index)`.
pub fn kabsch_best_fit(src: &PointCloud, dst: &PointCloud, pairs: &[(usize, usize)]) -> Result<RigidTransform> {
    let mut a = Vec::with_capacity(pairs.len());
    let mut b = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let (Some(p), Some(q)) = (src.points().get(i), dst.points().get(j)) else {
            return Err(Error::InvalidArgument(format!(
                "correspondence ({i}, {j}) out of range"
            )));
        };
        a.push(*p);
        b.push(*q);
    }
    kabsch_points(&a, &b)
}
