//! SE(3) transforms, quaternions, random pose sampling and registration error metrics.
//!
//! All geometry is carried in `f64`. Quaternions are scalar-first `(w, x, y, z)`.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::meshio::PointCloud;

/// Raw quaternions with a norm below this fall back to the identity rotation.
pub const DEGENERATE_QUAT_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        self.as_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_rotmat(self)
    }
}

/// Normalize a raw 4-vector into a unit quaternion.
///
/// Near-zero input maps to the identity quaternion instead of producing NaN.
pub fn quat_normalize(raw: [f64; 4]) -> Quaternion {
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm >= DEGENERATE_QUAT_NORM) {
        return Quaternion::IDENTITY;
    }
    Quaternion::new(raw[0] / norm, raw[1] / norm, raw[2] / norm, raw[3] / norm)
}

/// Rotation matrix of a unit quaternion.
pub fn quat_to_rotmat(q: &Quaternion) -> Matrix3<f64> {
    let Quaternion { w, x, y, z } = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// The 7-value pose a registration head emits: translation then raw quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose7 {
    pub translation: [f64; 3],
    pub quat_raw: [f64; 4],
}

impl Pose7 {
    pub fn new(translation: [f64; 3], quat_raw: [f64; 4]) -> Self {
        Self { translation, quat_raw }
    }

    /// Interpret `[tx, ty, tz, qw, qx, qy, qz]`.
    pub fn from_slice<T: Copy + Into<f64>>(values: &[T]) -> Result<Self> {
        if values.len() != 7 {
            return Err(Error::shape(
                "Pose7::from_slice",
                format!("expected 7 values, got {}", values.len()),
            ));
        }
        let v: Vec<f64> = values.iter().map(|&x| x.into()).collect();
        Ok(Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]]))
    }

    pub fn to_transform(&self) -> RigidTransform {
        pose7_to_transform(self)
    }
}

pub fn pose7_to_transform(p: &Pose7) -> RigidTransform {
    let rotation = quat_to_rotmat(&quat_normalize(p.quat_raw));
    RigidTransform::from_parts(rotation, Vector3::from(p.translation))
}

/// A proper rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Build from a rotation matrix and translation, checking that the
    /// rotation is orthonormal with unit determinant.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = Self { rotation, translation };
        if !t.is_valid(1e-6) {
            return Err(Error::InvalidArgument(
                "rotation is not orthonormal with det = 1".into(),
            ));
        }
        Ok(t)
    }

    pub(crate) fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::from_parts(Matrix3::identity(), t)
    }

    pub fn from_rotation(r: Matrix3<f64>) -> Self {
        Self::from_parts(r, Vector3::zeros())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).norm();
        ortho < tol && (r.determinant() - 1.0).abs() < tol && self.translation.iter().all(|v| v.is_finite())
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        compose(self, other)
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        Self::from_parts(rt, -(rt * self.translation))
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidArgument(format!(
                "homogeneous matrix bottom row must be 0 0 0 1, got {bottom:?}"
            )));
        }
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Row-major 4×4 homogeneous matrix, one row per line.
    pub fn to_matrix_text(&self) -> String {
        let m = self.to_homogeneous();
        let mut out = String::new();
        for r in 0..4 {
            let row: Vec<String> = (0..4).map(|c| format!("{}", m[(r, c)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parse 16 whitespace-separated floats (row-major homogeneous matrix).
    pub fn parse_matrix_text(text: &str) -> Result<Self> {
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad matrix entry `{tok}`")))
            })
            .collect::<Result<_>>()?;
        if values.len() != 16 {
            return Err(Error::InvalidArgument(format!(
                "expected 16 matrix entries, got {}",
                values.len()
            )));
        }
        Self::from_homogeneous(&Matrix4::from_row_slice(&values))
    }
}

impl fmt::Display for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_matrix_text())
    }
}

/// Applies `b` first, then `a`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform::from_parts(a.rotation * b.rotation, a.rotation * b.translation + a.translation)
}

/// Compose a chain `T(n) × … × T(1)` where `steps[0]` is `T(1)`.
pub fn compose_chain(steps: &[RigidTransform]) -> RigidTransform {
    steps
        .iter()
        .fold(RigidTransform::identity(), |acc, step| compose(step, &acc))
}

pub fn apply_transform(t: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    PointCloud::from_points_unchecked(cloud.points().iter().map(|p| t.apply_point(p)).collect())
}

/// Rotation `Rz(yaw) · Ry(pitch) · Rx(roll)` (intrinsic Z-Y-X), angles in radians.
pub fn euler_zyx_to_rotmat(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    let (sz, cz) = yaw.sin_cos();
    let (sy, cy) = pitch.sin_cos();
    let (sx, cx) = roll.sin_cos();
    let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    rz * ry * rx
}

/// Inverse of [`euler_zyx_to_rotmat`] on the principal branch, `|pitch| ≤ 90°`.
pub fn rotmat_to_euler_zyx(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    (yaw, pitch, roll)
}

/// Random rigid motion: Z-Y-X Euler angles uniform in `±angle_range_deg`,
/// translation components uniform in `±trans_range`.
pub fn random_transform<R: Rng + ?Sized>(rng: &mut R, angle_range_deg: f64, trans_range: f64) -> RigidTransform {
    let a = angle_range_deg.abs().to_radians();
    let t = trans_range.abs();
    let yaw = rng.random_range(-a..=a);
    let pitch = rng.random_range(-a..=a);
    let roll = rng.random_range(-a..=a);
    let translation = Vector3::new(
        rng.random_range(-t..=t),
        rng.random_range(-t..=t),
        rng.random_range(-t..=t),
    );
    RigidTransform::from_parts(euler_zyx_to_rotmat(yaw, pitch, roll), translation)
}

/// Angle (degrees, in `[0, 180]`) of the relative rotation `R_est · R_gtᵀ`.
///
/// Uses `atan2(sin, cos)` with the sine taken from the skew part, which stays
/// accurate for tiny angles where `acos` of the trace loses precision.
pub fn rotation_error_deg(est: &RigidTransform, gt: &RigidTransform) -> f64 {
    let rel = est.rotation * gt.rotation.transpose();
    let axis = Vector3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    );
    let sin = axis.norm() / 2.0;
    let cos = (rel.trace() - 1.0) / 2.0;
    sin.atan2(cos).to_degrees()
}

pub fn translation_error(est: &RigidTransform, gt: &RigidTransform) -> f64 {
    (est.translation - gt.translation).norm()
}

/// `‖T_curr · T_prev⁻¹ − I‖_F` over the 4×4 homogeneous matrices.
pub fn convergence_delta(curr: &RigidTransform, prev: &RigidTransform) -> f64 {
    let rel = compose(curr, &prev.inverse());
    (rel.to_homogeneous() - Matrix4::identity()).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn q(raw: [f64; 4]) -> Quaternion {
        quat_normalize(raw)
    }

    #[test]
    fn quat_normalize_examples() {
        assert_eq!(q([2.0, 0.0, 0.0, 0.0]), Quaternion::IDENTITY);
        assert_eq!(q([0.0; 4]), Quaternion::IDENTITY);
        let n = q([1.0, 1.0, 0.0, 0.0]);
        let expected = 1.0 / 2f64.sqrt();
        assert!((n.w - expected).abs() < 1e-12 && (n.x - expected).abs() < 1e-12);
        assert_eq!((n.y, n.z), (0.0, 0.0));
        assert!((n.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quat_rotmat_examples() {
        assert_eq!(quat_to_rotmat(&Quaternion::IDENTITY), Matrix3::identity());
        let r = quat_to_rotmat(&Quaternion::new(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2));
        let v = r * Vector3::new(1.0, 0.0, 0.0);
        assert!((v - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn pose7_examples() {
        let id = Pose7::new([0.0; 3], [1.0, 0.0, 0.0, 0.0]).to_transform();
        assert_eq!(id, RigidTransform::identity());

        let fallback = Pose7::new([1.0, 2.0, 3.0], [0.0; 4]).to_transform();
        assert_eq!(*fallback.rotation(), Matrix3::identity());
        assert_eq!(*fallback.translation(), Vector3::new(1.0, 2.0, 3.0));

        // 90° about x: y -> z, z -> -y
        let rx = Pose7::new([0.0; 3], [2.0, 2.0, 0.0, 0.0]).to_transform();
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!((rx.rotation() - expected).norm() < 1e-12);
    }

    #[test]
    fn pose7_from_slice_rejects_wrong_length() {
        assert!(Pose7::from_slice(&[0.0f32; 6]).is_err());
        let p = Pose7::from_slice(&[1.0f32, 2.0, 3.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.translation, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn compose_identity_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_transform(&mut rng, 45.0, 1.0);
        let id = RigidTransform::identity();
        assert_eq!(compose(&t, &id), t);
        assert_eq!(compose(&id, &t), t);
    }

    #[test]
    fn apply_transform_examples() {
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]).unwrap();
        let moved = apply_transform(&RigidTransform::from_translation(Vector3::x()), &cloud);
        assert_eq!(moved.points()[0], Point3::new(1.0, 0.0, 0.0));
        assert_eq!(apply_transform(&RigidTransform::identity(), &cloud), cloud);

        let rz = RigidTransform::from_rotation(euler_zyx_to_rotmat(90f64.to_radians(), 0.0, 0.0));
        let c = PointCloud::new(vec![Point3::new(1.0, 0.0, 0.0)]).unwrap();
        let out = apply_transform(&rz, &c);
        assert!((out.points()[0] - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn random_transform_bounds_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(random_transform(&mut rng, 0.0, 0.0), RigidTransform::identity());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let t = random_transform(&mut rng, 45.0, 1.0);
            let (yaw, pitch, roll) = rotmat_to_euler_zyx(t.rotation());
            for a in [yaw, pitch, roll] {
                assert!(a.to_degrees().abs() <= 45.0 + 1e-9, "angle {}", a.to_degrees());
            }
            assert!(t.translation().iter().all(|v| v.abs() <= 1.0));
            assert!(t.is_valid(1e-9));
        }

        let a = random_transform(&mut ChaCha8Rng::seed_from_u64(99), 45.0, 1.0);
        let b = random_transform(&mut ChaCha8Rng::seed_from_u64(99), 45.0, 1.0);
        assert_eq!(a.to_homogeneous().as_slice(), b.to_homogeneous().as_slice());
    }

    #[test]
    fn rotation_error_examples() {
        let id = RigidTransform::identity();
        assert_eq!(rotation_error_deg(&id, &id), 0.0);
        for axis in [Vector3::x(), Vector3::y(), Vector3::new(1.0, 2.0, -0.5).normalize()] {
            let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), std::f64::consts::PI);
            let t = RigidTransform::from_rotation(*r.matrix());
            assert!((rotation_error_deg(&t, &id) - 180.0).abs() < 1e-6);
        }
        let z30 = RigidTransform::from_rotation(euler_zyx_to_rotmat(30f64.to_radians(), 0.0, 0.0));
        assert!((rotation_error_deg(&z30, &id) - 30.0).abs() < 1e-9);
    }

    #[test]
    fn translation_error_examples() {
        let id = RigidTransform::identity();
        assert_eq!(translation_error(&id, &id), 0.0);
        let a = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(translation_error(&a, &id), 1.0);
        let b = RigidTransform::from_translation(Vector3::new(1.0, 1.0, 0.0));
        assert!((translation_error(&b, &id) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn convergence_delta_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let prev = random_transform(&mut rng, 45.0, 1.0);
        assert!(convergence_delta(&prev, &prev) < 1e-12);
        let eps_t = 3e-4;
        let curr = compose(&RigidTransform::from_translation(Vector3::new(eps_t, 0.0, 0.0)), &prev);
        assert!((convergence_delta(&curr, &prev) - eps_t).abs() < 1e-12);

        let tiny = compose(&RigidTransform::from_translation(Vector3::new(1e-9, 0.0, 0.0)), &prev);
        assert!(convergence_delta(&tiny, &prev) < 1e-7);
        let big = compose(&RigidTransform::from_translation(Vector3::new(1e-6, 0.0, 0.0)), &prev);
        assert!(convergence_delta(&big, &prev) >= 1e-7);
    }

    #[test]
    fn matrix_text_round_trips_exactly() {
        let t = random_transform(&mut ChaCha8Rng::seed_from_u64(8), 45.0, 1.0);
        let text = t.to_matrix_text();
        assert_eq!(text.split_whitespace().count(), 16);
        let back = RigidTransform::parse_matrix_text(&text).unwrap();
        assert_eq!(back, t);
        assert!(RigidTransform::parse_matrix_text("1 2 3").is_err());
    }

    #[test]
    fn new_rejects_non_rotation() {
        assert!(RigidTransform::new(Matrix3::identity() * 2.0, Vector3::zeros()).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(reflect, Vector3::zeros()).is_err());
    }

    fn transform_strategy() -> impl Strategy<Value = RigidTransform> {
        any::<u64>().prop_map(|s| random_transform(&mut ChaCha8Rng::seed_from_u64(s), 180.0, 2.0))
    }

    fn unit_quat() -> impl Strategy<Value = Quaternion> {
        prop::array::uniform4(-1.0f64..1.0)
            .prop_filter("non-degenerate", |a| a.iter().map(|v| v * v).sum::<f64>() > 1e-3)
            .prop_map(quat_normalize)
    }

    proptest! {
        #[test]
        fn rotmat_orthonormal_and_double_cover(q in unit_quat()) {
            let r = quat_to_rotmat(&q);
            prop_assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-9);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
            let neg = Quaternion::new(-q.w, -q.x, -q.y, -q.z);
            let rn = quat_to_rotmat(&neg);
            prop_assert!((r - rn).norm() < 1e-12);
            let a = RigidTransform::from_rotation(r);
            let b = RigidTransform::from_rotation(rn);
            prop_assert!(rotation_error_deg(&a, &b) < 1e-5);
        }

        #[test]
        fn compose_is_pointwise_and_associative(
            a in transform_strategy(), b in transform_strategy(), c in transform_strategy(),
            x in prop::array::uniform3(-2.0f64..2.0),
        ) {
            let p = Point3::from(x);
            let lhs = compose(&a, &b).apply_point(&p);
            let rhs = a.apply_point(&b.apply_point(&p));
            prop_assert!((lhs - rhs).norm() < 1e-12);
            let left = compose(&compose(&a, &b), &c).to_homogeneous();
            let right = compose(&a, &compose(&b, &c)).to_homogeneous();
            prop_assert!((left - right).norm() < 1e-9);
        }

        #[test]
        fn rotation_error_symmetric(a in transform_strategy(), b in transform_strategy()) {
            prop_assert!(rotation_error_deg(&a, &a) < 1e-10);
            prop_assert!((rotation_error_deg(&a, &b) - rotation_error_deg(&b, &a)).abs() < 1e-9);
            let e = rotation_error_deg(&a, &b);
            prop_assert!((0.0..=180.0).contains(&e));
        }

        #[test]
        fn apply_preserves_distances(t in transform_strategy(),
            pts in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 2..20)) {
            let cloud = PointCloud::new(pts.iter().map(|&p| Point3::from(p)).collect()).unwrap();
            let moved = apply_transform(&t, &cloud);
            for i in 0..cloud.len() {
                for j in 0..cloud.len() {
                    let d0 = (cloud.points()[i] - cloud.points()[j]).norm();
                    let d1 = (moved.points()[i] - moved.points()[j]).norm();
                    prop_assert!((d0 - d1).abs() < 1e-6);
                }
            }
        }
    }
}
