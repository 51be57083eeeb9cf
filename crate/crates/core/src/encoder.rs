//! PointNet global feature: a shared per-point MLP followed by a column-wise
//! max-pool over points. The same parameters encode source and template.

use crate::error::{Error, Result};
use crate::meshio::PointCloud;
use crate::nncore::{dense_forward, maxpool_points, relu_inplace, Grads, LayerSpec, ParamStore, Real, Tensor2};

/// Widths of the shared per-point layers.
pub const PAPER_ENCODER_WIDTHS: [usize; 5] = [64, 64, 64, 128, 1024];

pub fn layer_name(i: usize) -> String {
    format!("enc.{i}")
}

pub fn encoder_layer_specs(widths: &[usize]) -> Vec<LayerSpec> {
    let mut fan_in = 3;
    widths
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let spec = LayerSpec::new(layer_name(i), fan_in, w);
            fan_in = w;
            spec
        })
        .collect()
}

/// Max-pooled feature vector of one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFeature(pub Vec<Real>);

impl GlobalFeature {
    pub fn as_slice(&self) -> &[Real] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Activations kept from [`encode`] for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    input: Tensor2,
    /// Post-ReLU output of every layer.
    activations: Vec<Tensor2>,
    argmax: Vec<usize>,
    layer_ids: Vec<usize>,
}

impl EncoderCache {
    pub fn num_points(&self) -> usize {
        self.input.rows()
    }
}

fn layer_ids(params: &ParamStore, depth: usize) -> Result<Vec<usize>> {
    (0..depth)
        .map(|i| {
            params
                .index_of(&layer_name(i))
                .ok_or_else(|| Error::shape("encode", format!("missing layer {}", layer_name(i))))
        })
        .collect()
}

/// Number of `enc.*` layers present in a store.
pub fn encoder_depth(params: &ParamStore) -> usize {
    (0..).take_while(|&i| params.index_of(&layer_name(i)).is_some()).count()
}

/// Encode an `N × 3` tensor. ReLU follows every layer, the last one included.
pub fn encode(params: &ParamStore, points: &Tensor2) -> Result<(GlobalFeature, EncoderCache)> {
    if points.rows() == 0 {
        return Err(Error::EmptyCloud);
    }
    if points.cols() != 3 {
        return Err(Error::shape("encode", format!("input has {} columns", points.cols())));
    }
    let depth = encoder_depth(params);
    if depth == 0 {
        return Err(Error::shape("encode", "no encoder layers in parameter store"));
    }
    let ids = layer_ids(params, depth)?;
    let mut activations: Vec<Tensor2> = Vec::with_capacity(depth);
    for &id in &ids {
        let layer = &params.layers()[id];
        let x = activations.last().unwrap_or(points);
        let mut y = dense_forward(x, &layer.weight, &layer.bias)?;
        relu_inplace(&mut y);
        activations.push(y);
    }
    let (pooled, argmax) = maxpool_points(activations.last().expect("depth > 0"))?;
    Ok((
        GlobalFeature(pooled),
        EncoderCache {
            input: points.clone(),
            activations,
            argmax,
            layer_ids: ids,
        },
    ))
}

pub fn encode_cloud(params: &ParamStore, cloud: &PointCloud) -> Result<(GlobalFeature, EncoderCache)> {
    encode(params, &cloud.to_tensor())
}

/// Gather the given rows of `t`.
fn gather_rows(t: &Tensor2, rows: &[usize]) -> Tensor2 {
    let mut data = Vec::with_capacity(rows.len() * t.cols());
    for &r in rows {
        data.extend_from_slice(t.row(r));
    }
    Tensor2::from_vec(rows.len(), t.cols(), data).expect("gathered shape")
}

/// Reverse of [`encode`]. Parameter gradients are added into `grads`; the
/// returned tensor is the gradient with respect to the input points.
///
/// Only rows that won at least one max-pool column carry gradient, so the
/// per-point layers are back-propagated over that subset alone.
pub fn encode_backward(
    params: &ParamStore,
    cache: &EncoderCache,
    dfeature: &[Real],
    grads: &mut Grads,
) -> Result<Tensor2> {
    let depth = cache.activations.len();
    let top = &cache.activations[depth - 1];
    if dfeature.len() != top.cols() || cache.argmax.len() != top.cols() {
        return Err(Error::shape(
            "encode_backward",
            format!("dfeature has {} entries, feature has {}", dfeature.len(), top.cols()),
        ));
    }
    for (&id, a) in cache.layer_ids.iter().zip(&cache.activations) {
        let l = params.layers().get(id);
        if l.map(|l| l.fan_out()) != Some(a.cols()) {
            return Err(Error::shape("encode_backward", "stale cache for these parameters"));
        }
    }
    let n = cache.num_points();

    let mut active: Vec<usize> = cache.argmax.clone();
    active.sort_unstable();
    active.dedup();
    let slot: std::collections::HashMap<usize, usize> = active.iter().enumerate().map(|(i, &r)| (r, i)).collect();

    // Top layer: each column's gradient lands on one row only.
    let top_id = cache.layer_ids[depth - 1];
    let top_layer = &params.layers()[top_id];
    let below_top = if depth >= 2 {
        &cache.activations[depth - 2]
    } else {
        &cache.input
    };
    let fan_in = top_layer.fan_in();
    let mut d_below = Tensor2::zeros(active.len(), fan_in);
    {
        let gw = &mut grads.weights[top_id];
        let gb = &mut grads.biases[top_id];
        let cols = top.cols();
        for (c, (&r, &g)) in cache.argmax.iter().zip(dfeature).enumerate() {
            if g == 0.0 || top.get(r, c) <= 0.0 {
                continue;
            }
            gb[c] += g;
            let x = below_top.row(r);
            for (k, &xv) in x.iter().enumerate() {
                gw.data_mut()[k * cols + c] += xv * g;
            }
            let s = slot[&r];
            let w = top_layer.weight.data();
            let drow = &mut d_below.data_mut()[s * fan_in..(s + 1) * fan_in];
            for (k, d) in drow.iter_mut().enumerate() {
                *d += w[k * cols + c] * g;
            }
        }
    }

    // Remaining layers over the active rows.
    for li in (0..depth - 1).rev() {
        let id = cache.layer_ids[li];
        let layer = &params.layers()[id];
        let out = gather_rows(&cache.activations[li], &active);
        let input = if li == 0 {
            &cache.input
        } else {
            &cache.activations[li - 1]
        };
        let input = gather_rows(input, &active);
        let mut dz = d_below;
        for (g, &a) in dz.data_mut().iter_mut().zip(out.data()) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
        let mut dx = Tensor2::zeros(active.len(), layer.fan_in());
        crate::nncore::dense_backward_acc(
            &input,
            &layer.weight,
            &dz,
            Some(&mut dx),
            &mut grads.weights[id],
            &mut grads.biases[id],
        )?;
        d_below = dx;
    }

    let mut dcloud = Tensor2::zeros(n, 3);
    for (s, &r) in active.iter().enumerate() {
        for k in 0..3 {
            dcloud.set(r, k, d_below.get(s, k));
        }
    }
    Ok(dcloud)
}
