//! Chamfer distance: mean nearest-neighbour distance in both directions, summed.

use nalgebra::{Point3, Vector3};

use super::LossValue;
use crate::error::{Error, Result};
use crate::meshio::PointCloud;

/// Index of the nearest point in `cloud`, lowest index on ties.
fn nearest(p: &Point3<f64>, cloud: &[Point3<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, q) in cloud.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// `mean_x min_y ‖x − y‖ + mean_y min_x ‖x − y‖` with gradient with respect to `est`.
pub fn chamfer(est: &PointCloud, template: &PointCloud) -> Result<LossValue> {
    if est.is_empty() || template.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (e, t) = (est.points(), template.points());
    let (ne, nt) = (e.len() as f64, t.len() as f64);
    let mut grad = vec![Vector3::zeros(); e.len()];
    let mut forward = 0.0;
    for (i, p) in e.iter().enumerate() {
        let diff = p - t[nearest(p, t)];
        let d = diff.norm();
        forward += d;
        if d > 0.0 {
            grad[i] += diff / (ne * d);
        }
    }
    let mut backward = 0.0;
    for q in t {
        let i = nearest(q, e);
        let diff = e[i] - q;
        let d = diff.norm();
        backward += d;
        if d > 0.0 {
            grad[i] += diff / (nt * d);
        }
    }
    Ok(LossValue {
        value: forward / ne + backward / nt,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|p| Point3::from(*p)).collect()).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let a = cloud(&[[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]);
        assert_eq!(chamfer(&a, &a).unwrap().value, 0.0);
    }

    #[test]
    fn one_point_each_side() {
        let l = chamfer(&cloud(&[[0.0; 3]]), &cloud(&[[1.0, 0.0, 0.0]])).unwrap();
        assert_eq!(l.value, 2.0);
        assert_eq!(l.grad[0], Vector3::new(-2.0, 0.0, 0.0));
    }

    #[test]
    fn sizes_may_differ_but_not_be_empty() {
        let a = cloud(&[[0.0; 3]]);
        let b = cloud(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert!((chamfer(&a, &b).unwrap().value - 2.5).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts = || {
            (0..4)
                .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
                .collect::<Vec<_>>()
        };
        let a = pts();
        let b = PointCloud::new(pts()).unwrap();
        let l = chamfer(&PointCloud::new(a.clone()).unwrap(), &b).unwrap();
        let h = 1e-7;
        for i in 0..a.len() {
            for k in 0..3 {
                let mut up = a.clone();
                up[i][k] += h;
                let mut down = a.clone();
                down[i][k] -= h;
                let num = (chamfer(&PointCloud::new(up).unwrap(), &b).unwrap().value
                    - chamfer(&PointCloud::new(down).unwrap(), &b).unwrap().value)
                    / (2.0 * h);
                assert!((num - l.grad[i][k]).abs() < 1e-6);
            }
        }
    }
}
