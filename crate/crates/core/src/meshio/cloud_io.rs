//! Point cloud files: ASCII `x y z` lines, or the packed binary layout
//! `"PCRC"`, `u32` count, then `count × 3` little-endian `f32`.

use std::path::Path;

use nalgebra::Point3;

use super::PointCloud;
use crate::error::{Error, Result};

pub const CLOUD_MAGIC: &[u8; 4] = b"PCRC";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    Binary,
}

impl CloudFormat {
    /// `.xyz` and `.txt` are ASCII; everything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("xyz") | Some("txt") => CloudFormat::Xyz,
            _ => CloudFormat::Binary,
        }
    }
}

pub fn encode_cloud(cloud: &PointCloud, format: CloudFormat) -> Vec<u8> {
    match format {
        CloudFormat::Xyz => {
            let mut s = String::new();
            for p in cloud.points() {
                s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
            }
            s.into_bytes()
        }
        CloudFormat::Binary => {
            let mut out = Vec::with_capacity(8 + cloud.len() * 12);
            out.extend_from_slice(CLOUD_MAGIC);
            out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
            for p in cloud.points() {
                for v in [p.x, p.y, p.z] {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            out
        }
    }
}

/// Decode either format, sniffing the binary magic.
pub fn read_cloud_bytes(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let bad = |message: String| Error::CloudFormat {
        path: path.to_path_buf(),
        message,
    };
    if bytes.starts_with(CLOUD_MAGIC) {
        if bytes.len() < 8 {
            return Err(bad("truncated header".into()));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() != count * 12 {
            return Err(bad(format!(
                "expected {} payload bytes, found {}",
                count * 12,
                body.len()
            )));
        }
        let points = body
            .chunks_exact(12)
            .map(|c| {
                let f = |o: usize| f32::from_le_bytes(c[o..o + 4].try_into().unwrap()) as f64;
                Point3::new(f(0), f(4), f(8))
            })
            .collect();
        return PointCloud::new(points).map_err(|e| bad(e.to_string()));
    }
    let text = std::str::from_utf8(bytes).map_err(|_| bad("neither PCRC binary nor UTF-8 text".into()))?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("line {}: bad number", i + 1)))?;
        if v.len() != 3 {
            return Err(bad(format!("line {}: expected 3 values, got {}", i + 1, v.len())));
        }
        points.push(Point3::new(v[0], v[1], v[2]));
    }
    PointCloud::new(points).map_err(|e| bad(e.to_string()))
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path)?;
    read_cloud_bytes(&bytes, path)
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    std::fs::write(path, encode_cloud(cloud, CloudFormat::from_path(path)))?;
    Ok(())
}
