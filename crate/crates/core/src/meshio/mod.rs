//! Meshes, point clouds, and the sampling pipeline that turns one into the other.

mod cloud_io;
mod off;
mod sampling;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::nncore::{Real, Tensor2};

pub use cloud_io::{read_cloud, read_cloud_bytes, write_cloud, CloudFormat, CLOUD_MAGIC};
pub use off::{parse_off, serialize_off};
pub use sampling::{
    add_gaussian_noise, area_weighted_sample, farthest_point_sample, normalize_unit_box, sample_mesh,
    DEFAULT_OVERSAMPLE, DEFAULT_POINTS,
};

/// Triangle mesh with vertex positions and index triples.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(bad) = faces.iter().flatten().find(|&&i| i >= vertices.len()) {
            return Err(Error::InvalidArgument(format!(
                "face index {bad} out of range for {} vertices",
                vertices.len()
            )));
        }
        Ok(Self { vertices, faces })
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.faces[face].map(|i| self.vertices[i]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }
}

/// An ordered list of 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
}

impl PointCloud {
    /// Requires at least one point and finite coordinates.
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.iter().any(|p| !p.coords.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidArgument("non-finite point coordinate".into()));
        }
        Ok(Self { points })
    }

    pub(crate) fn from_points_unchecked(points: Vec<Point3<f64>>) -> Self {
        Self { points }
    }

    pub fn from_tensor(t: &Tensor2) -> Result<Self> {
        if t.cols() != 3 {
            return Err(Error::shape("PointCloud::from_tensor", format!("{} columns", t.cols())));
        }
        Self::new(
            t.data()
                .chunks_exact(3)
                .map(|r| Point3::new(r[0] as f64, r[1] as f64, r[2] as f64))
                .collect(),
        )
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3<f64>> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self.points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.points.len() as f64)
    }

    /// Per-axis `(min, max)` corners.
    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// `N × 3` tensor in network precision.
    pub fn to_tensor(&self) -> Tensor2 {
        let data = self
            .points
            .iter()
            .flat_map(|p| [p.x as Real, p.y as Real, p.z as Real])
            .collect();
        Tensor2::from_vec(self.points.len(), 3, data).expect("N×3 layout")
    }
}
