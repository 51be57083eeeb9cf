use rand::Rng;

use super::{ModelConfig, POSE_SIZE};
use crate::encoder::GlobalFeature;
use crate::error::{Error, Result};
use crate::nncore::{
    dense_backward_acc, dense_forward, dropout_backward, dropout_forward, relu_inplace, DropoutMask, Grads, ParamStore,
    Real, Tensor2,
};

pub const OUTPUT_LAYER: &str = "head.out";

pub fn hidden_name(i: usize) -> String {
    format!("head.{i}")
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    input: Tensor2,
    hidden: Vec<Tensor2>,
    mask: DropoutMask,
    dropped: Tensor2,
    ids: Vec<usize>,
}

fn head_ids(params: &ParamStore, config: &ModelConfig) -> Result<Vec<usize>> {
    let mut names: Vec<String> = (0..config.head.len()).map(hidden_name).collect();
    names.push(OUTPUT_LAYER.to_string());
    names
        .iter()
        .map(|n| {
            params
                .index_of(n)
                .ok_or_else(|| Error::shape("head_forward", format!("missing layer {n}")))
        })
        .collect()
}

/// `[φ(source), φ(template)]` → FC stack with ReLU → optional dropout → raw 7-vector.
pub fn head_forward<R: Rng + ?Sized>(
    params: &ParamStore,
    config: &ModelConfig,
    feat_source: &GlobalFeature,
    feat_template: &GlobalFeature,
    training: bool,
    rng: &mut R,
) -> Result<([Real; POSE_SIZE], HeadCache)> {
    let ids = head_ids(params, config)?;
    let mut concat = Vec::with_capacity(feat_source.len() + feat_template.len());
    concat.extend_from_slice(feat_source.as_slice());
    concat.extend_from_slice(feat_template.as_slice());
    let input = Tensor2::row_vector(&concat);
    if params.layers()[ids[0]].fan_in() != input.cols() {
        return Err(Error::shape(
            "head_forward",
            format!(
                "head expects {} inputs, features give {}",
                params.layers()[ids[0]].fan_in(),
                input.cols()
            ),
        ));
    }

    let mut hidden: Vec<Tensor2> = Vec::with_capacity(config.head.len());
    for &id in &ids[..ids.len() - 1] {
        let l = &params.layers()[id];
        let mut y = dense_forward(hidden.last().unwrap_or(&input), &l.weight, &l.bias)?;
        relu_inplace(&mut y);
        hidden.push(y);
    }
    let last_hidden = hidden.last().unwrap_or(&input);
    let (dropped, mask) = dropout_forward(last_hidden.data(), config.dropout, rng, training)?;
    let dropped = Tensor2::row_vector(&dropped);
    let out_layer = &params.layers()[ids[ids.len() - 1]];
    let out = dense_forward(&dropped, &out_layer.weight, &out_layer.bias)?;
    let pose: [Real; POSE_SIZE] = out
        .data()
        .try_into()
        .map_err(|_| Error::shape("head_forward", "output layer is not 7 wide"))?;
    Ok((
        pose,
        HeadCache {
            input,
            hidden,
            mask,
            dropped,
            ids,
        },
    ))
}

/// Back-propagate a pose gradient through the head. Returns the gradients
/// with respect to the source and template features.
pub fn head_backward(
    params: &ParamStore,
    cache: &HeadCache,
    dpose: &[Real; POSE_SIZE],
    grads: &mut Grads,
) -> Result<(Vec<Real>, Vec<Real>)> {
    let out_id = *cache.ids.last().expect("output id");
    let out_layer = &params.layers()[out_id];
    let dy = Tensor2::row_vector(dpose);
    let mut d_dropped = Tensor2::zeros(1, out_layer.fan_in());
    dense_backward_acc(
        &cache.dropped,
        &out_layer.weight,
        &dy,
        Some(&mut d_dropped),
        &mut grads.weights[out_id],
        &mut grads.biases[out_id],
    )?;
    let mut d = Tensor2::row_vector(&dropout_backward(&cache.mask, d_dropped.data()));

    for (k, &id) in cache.ids[..cache.ids.len() - 1].iter().enumerate().rev() {
        let l = &params.layers()[id];
        for (g, &a) in d.data_mut().iter_mut().zip(cache.hidden[k].data()) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
        let x = if k == 0 { &cache.input } else { &cache.hidden[k - 1] };
        let mut dx = Tensor2::zeros(1, l.fan_in());
        dense_backward_acc(
            x,
            &l.weight,
            &d,
            Some(&mut dx),
            &mut grads.weights[id],
            &mut grads.biases[id],
        )?;
        d = dx;
    }
    let half = d.cols() / 2;
    let (ds, dt) = d.data().split_at(half);
    Ok((ds.to_vec(), dt.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcrnet::{ModelConfig, PcrNet, Variant};
    use crate::testutil::{max_rel_error, numeric_grad};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            variant: Variant::Iterative,
            encoder: vec![4, 4, 4, 8, 6],
            head: vec![10, 8],
            dropout: 0.0,
        }
    }

    fn feats(rng: &mut ChaCha8Rng, n: usize) -> GlobalFeature {
        GlobalFeature((0..n).map(|_| rng.random_range(0.0..1.0)).collect())
    }

    #[test]
    fn fresh_head_predicts_near_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = PcrNet::new(ModelConfig::tiny(Variant::Iterative), &mut rng).unwrap();
        let (fs, ft) = (feats(&mut rng, 128), feats(&mut rng, 128));
        let (pose, _) = head_forward(&net.params, &net.config, &fs, &ft, false, &mut rng).unwrap();
        assert!(pose[..3].iter().all(|t| t.abs() < 0.2));
        assert!((pose[3] - 1.0).abs() < 0.2);
        assert!(pose[4..].iter().all(|q| q.abs() < 0.2));
    }

    #[test]
    fn swapping_features_may_change_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = PcrNet::new(tiny_config(), &mut rng).unwrap();
        net.params
            .layer_mut(OUTPUT_LAYER)
            .unwrap()
            .weight
            .data_mut()
            .iter_mut()
            .for_each(|w| *w *= 100.0);
        let (fs, ft) = (feats(&mut rng, 6), feats(&mut rng, 6));
        let (a, _) = head_forward(&net.params, &net.config, &fs, &ft, false, &mut rng).unwrap();
        let (b, _) = head_forward(&net.params, &net.config, &ft, &fs, false, &mut rng).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn rejects_wrong_feature_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = PcrNet::new(tiny_config(), &mut rng).unwrap();
        let (fs, ft) = (feats(&mut rng, 5), feats(&mut rng, 6));
        assert!(head_forward(&net.params, &net.config, &fs, &ft, false, &mut rng).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = PcrNet::new(tiny_config(), &mut rng).unwrap();
        net.params
            .layer_mut(OUTPUT_LAYER)
            .unwrap()
            .weight
            .data_mut()
            .iter_mut()
            .for_each(|w| *w *= 100.0);
        let (fs, ft) = (feats(&mut rng, 6), feats(&mut rng, 6));
        let coeff: [Real; 7] = [0.3, -0.5, 1.0, 0.7, -1.1, 0.2, 0.9];
        let objective = |p: &ParamStore, a: &GlobalFeature, b: &GlobalFeature| -> f64 {
            let (pose, _) = head_forward(p, &net.config, a, b, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            pose.iter().zip(&coeff).map(|(&x, &c)| x as f64 * c as f64).sum()
        };
        let (_, cache) = head_forward(&net.params, &net.config, &fs, &ft, false, &mut rng).unwrap();
        let mut grads = net.params.grads_like();
        let (ds, dt) = head_backward(&net.params, &cache, &coeff, &mut grads).unwrap();

        let num_s = numeric_grad(fs.as_slice(), 1e-3, |x| {
            objective(&net.params, &GlobalFeature(x.to_vec()), &ft)
        });
        let num_t = numeric_grad(ft.as_slice(), 1e-3, |x| {
            objective(&net.params, &fs, &GlobalFeature(x.to_vec()))
        });
        assert!(max_rel_error(&ds, &num_s) < 1e-3);
        assert!(max_rel_error(&dt, &num_t) < 1e-3);

        for name in [hidden_name(0), OUTPUT_LAYER.to_string()] {
            let li = net.params.index_of(&name).unwrap();
            let num = numeric_grad(net.params.layers()[li].weight.data(), 1e-3, |ws| {
                let mut p = net.params.clone();
                p.layers_mut()[li].weight.data_mut().copy_from_slice(ws);
                objective(&p, &fs, &ft)
            });
            let err = max_rel_error(grads.weights[li].data(), &num);
            assert!(err < 1e-3, "{name}: {err}");
        }
    }
}
