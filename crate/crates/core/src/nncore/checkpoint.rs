//! Checkpoint = directory holding `manifest.json` and `params.bin`.
//!
//! The blob is every array listed in the manifest, concatenated in manifest
//! order as little-endian floats of the manifest's `dtype`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, Layer, ParamStore, Real, Tensor2, REAL_DTYPE};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "pcrnet-checkpoint-v1";
const MANIFEST_FILE: &str = "manifest.json";
const BLOB_FILE: &str = "params.bin";
const ARRAY_KINDS: [&str; 6] = ["weight", "bias", "m_weight", "v_weight", "m_bias", "v_bias"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub layer: String,
    pub kind: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub dtype: String,
    pub arrays: Vec<ArrayEntry>,
    pub adam: AdamState,
    /// Free-form metadata: model variant, config echo, training history.
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub adam: AdamState,
    pub meta: serde_json::Value,
}

fn layer_arrays(l: &Layer) -> [&[Real]; 6] {
    [
        l.weight.data(),
        &l.bias,
        l.m_weight.data(),
        l.v_weight.data(),
        &l.m_bias,
        &l.v_bias,
    ]
}

pub fn save_checkpoint(dir: &Path, params: &ParamStore, adam: &AdamState, meta: serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut arrays = Vec::new();
    let mut blob = Vec::new();
    for l in params.layers() {
        let (r, c) = l.weight.shape();
        for (kind, data) in ARRAY_KINDS.iter().zip(layer_arrays(l)) {
            let shape = if kind.ends_with("weight") { vec![r, c] } else { vec![c] };
            arrays.push(ArrayEntry {
                layer: l.name.clone(),
                kind: kind.to_string(),
                shape,
            });
            for v in data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.into(),
        dtype: REAL_DTYPE.into(),
        arrays,
        adam: adam.clone(),
        meta,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    std::fs::write(dir.join(BLOB_FILE), blob)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unknown format `{}`", manifest.format)));
    }
    if manifest.dtype != REAL_DTYPE {
        return Err(Error::Checkpoint(format!(
            "checkpoint dtype {} but this build uses {REAL_DTYPE}",
            manifest.dtype
        )));
    }
    let blob = std::fs::read(dir.join(BLOB_FILE))?;
    let width = std::mem::size_of::<Real>();
    let mut values = blob
        .chunks_exact(width)
        .map(|c| Real::from_le_bytes(c.try_into().expect("chunk width")));
    let expected: usize = manifest.arrays.iter().map(|a| a.shape.iter().product::<usize>()).sum();
    if blob.len() != expected * width {
        return Err(Error::Checkpoint(format!(
            "blob holds {} bytes, manifest describes {}",
            blob.len(),
            expected * width
        )));
    }
    if !manifest.arrays.len().is_multiple_of(ARRAY_KINDS.len()) {
        return Err(Error::Checkpoint("array list is not a whole number of layers".into()));
    }

    let mut params = ParamStore::new();
    for group in manifest.arrays.chunks(ARRAY_KINDS.len()) {
        let name = &group[0].layer;
        let ok = group
            .iter()
            .zip(ARRAY_KINDS)
            .all(|(a, k)| a.kind == k && &a.layer == name);
        let (shape_w, shape_b) = (&group[0].shape, &group[1].shape);
        if !ok || shape_w.len() != 2 || shape_b.len() != 1 || shape_b[0] != shape_w[1] {
            return Err(Error::Checkpoint(format!("malformed entries for layer `{name}`")));
        }
        let (r, c) = (shape_w[0], shape_w[1]);
        let mut take = |n: usize| -> Vec<Real> { values.by_ref().take(n).collect() };
        let weight = Tensor2::from_vec(r, c, take(r * c))?;
        let bias = take(c);
        let mut layer = Layer::new(name.clone(), weight, bias)?;
        layer.m_weight = Tensor2::from_vec(r, c, take(r * c))?;
        layer.v_weight = Tensor2::from_vec(r, c, take(r * c))?;
        layer.m_bias = take(c);
        layer.v_bias = take(c);
        params.push(layer)?;
    }
    Ok(Checkpoint {
        params,
        adam: manifest.adam,
        meta: manifest.meta,
    })
}
