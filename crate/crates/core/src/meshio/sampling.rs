use nalgebra::Point3;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;

use super::{Mesh, PointCloud};
use crate::error::{Error, Result};

/// Points per cloud in the default pipeline.
pub const DEFAULT_POINTS: usize = 1024;
/// Area-weighted samples drawn per final point before farthest-point thinning.
pub const DEFAULT_OVERSAMPLE: usize = 10;

/// Draw `m` points uniformly over the mesh surface: pick a face with
/// probability proportional to its area, then a uniform barycentric point.
pub fn area_weighted_sample<R: Rng + ?Sized>(mesh: &Mesh, m: usize, rng: &mut R) -> Result<PointCloud> {
    let areas: Vec<f64> = (0..mesh.faces.len()).map(|f| mesh.face_area(f)).collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("mesh has no face with positive area".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let faces = WeightedIndex::new(&areas).map_err(|e| Error::Degenerate(e.to_string()))?;
    let points = (0..m)
        .map(|_| {
            let [a, b, c] = mesh.faces[faces.sample(rng)].map(|i| mesh.vertices[i].coords);
            let s = rng.random::<f64>().sqrt();
            let r = rng.random::<f64>();
            Point3::from(a * (1.0 - s) + b * (s * (1.0 - r)) + c * (s * r))
        })
        .collect();
    PointCloud::new(points)
}

/// Greedy max-min subset of `n` points, seeded at index 0. Ties go to the
/// lowest index.
pub fn farthest_point_sample(cloud: &PointCloud, n: usize) -> Result<PointCloud> {
    let pts = cloud.points();
    if n > pts.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot pick {n} points from a cloud of {}",
            pts.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let mut min_dist = vec![f64::INFINITY; pts.len()];
    let mut chosen = Vec::with_capacity(n);
    let mut current = 0;
    for _ in 0..n {
        chosen.push(pts[current]);
        min_dist[current] = f64::NEG_INFINITY;
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, p) in pts.iter().enumerate() {
            if min_dist[i] == f64::NEG_INFINITY {
                continue;
            }
            let d = (p - pts[current]).norm_squared();
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > best.0 {
                best = (min_dist[i], i);
            }
        }
        current = best.1;
    }
    PointCloud::new(chosen)
}

/// Uniformly scale so the largest bounding-box side is 1, then move the
/// centroid to the origin. Zero-extent clouds are only recentered.
pub fn normalize_unit_box(cloud: &PointCloud) -> PointCloud {
    let (lo, hi) = cloud.bounds();
    let extent = (hi - lo).max();
    let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };
    let scaled: Vec<Point3<f64>> = cloud.points().iter().map(|p| p * scale).collect();
    let scaled = PointCloud::from_points_unchecked(scaled);
    let c = scaled.centroid().coords;
    PointCloud::from_points_unchecked(scaled.points().iter().map(|p| p - c).collect())
}

/// Add independent `N(0, sigma²)` noise to every coordinate.
pub fn add_gaussian_noise<R: Rng + ?Sized>(cloud: &PointCloud, sigma: f64, rng: &mut R) -> Result<PointCloud> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(PointCloud::from_points_unchecked(
        cloud
            .points()
            .iter()
            .map(|p| {
                Point3::new(
                    p.x + normal.sample(rng),
                    p.y + normal.sample(rng),
                    p.z + normal.sample(rng),
                )
            })
            .collect(),
    ))
}

/// Area sample `oversample × n` points, thin to `n` with farthest-point
/// sampling, then normalize into the unit box.
pub fn sample_mesh<R: Rng + ?Sized>(mesh: &Mesh, n: usize, oversample: usize, rng: &mut R) -> Result<PointCloud> {
    let dense = area_weighted_sample(mesh, n * oversample.max(1), rng)?;
    let thinned = farthest_point_sample(&dense, n)?;
    Ok(normalize_unit_box(&thinned))
}
