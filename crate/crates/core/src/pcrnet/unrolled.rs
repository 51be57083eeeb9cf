//! Unrolled training pass for iterative registration. Gradients flow through
//! every iteration: through each pose into the moved source, and through the
//! encoder of every intermediate source.

use nalgebra::{Point3, Vector3};
use rand::Rng;

use super::{apply_pose_backward, head_backward, head_forward, HeadCache, PcrNet, PoseForward, POSE_SIZE};
use crate::encoder::{encode, encode_backward, EncoderCache};
use crate::error::{Error, Result};
use crate::geometry::{compose_chain, RigidTransform};
use crate::meshio::PointCloud;
use crate::nncore::{Grads, Real, Tensor2};

/// Iterations unrolled during training.
pub const DEFAULT_TRAIN_UNROLL: usize = 8;

#[derive(Debug, Clone)]
struct StepCache {
    input: Vec<Point3<f64>>,
    encoder: EncoderCache,
    head: HeadCache,
    pose: PoseForward,
}

/// Everything [`train_backward`] needs from [`train_forward_iterative`].
#[derive(Debug, Clone)]
pub struct UnrolledCache {
    template: EncoderCache,
    steps: Vec<StepCache>,
    output: Vec<Point3<f64>>,
}

impl UnrolledCache {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    /// The moved source after every iteration, first iteration first.
    pub fn outputs(&self) -> Vec<PointCloud> {
        self.steps
            .iter()
            .skip(1)
            .map(|s| &s.input)
            .chain(std::iter::once(&self.output))
            .map(|p| PointCloud::new(p.clone()).expect("finite points"))
            .collect()
    }

    /// Composed transform `T(n) × … × T(1)` of the unrolled pass.
    pub fn transform(&self) -> RigidTransform {
        let steps: Vec<RigidTransform> = self.steps.iter().map(|s| s.pose.transform()).collect();
        compose_chain(&steps)
    }
}

fn points_to_tensor(points: &[Point3<f64>]) -> Tensor2 {
    let data = points
        .iter()
        .flat_map(|p| [p.x as Real, p.y as Real, p.z as Real])
        .collect();
    Tensor2::from_vec(points.len(), 3, data).expect("N×3")
}

/// Run `n_iter` registration steps in training mode (dropout active) and
/// return the final moved source.
pub fn train_forward_iterative<R: Rng + ?Sized>(
    net: &PcrNet,
    source: &PointCloud,
    template: &PointCloud,
    n_iter: usize,
    rng: &mut R,
) -> Result<(PointCloud, UnrolledCache)> {
    if n_iter == 0 {
        return Err(Error::InvalidArgument("unroll count must be at least 1".into()));
    }
    let (feat_template, template_cache) = encode(&net.params, &template.to_tensor())?;
    let mut current = source.points().to_vec();
    let mut steps = Vec::with_capacity(n_iter);
    for _ in 0..n_iter {
        let (feat_source, enc_cache) = encode(&net.params, &points_to_tensor(&current))?;
        let (raw, head_cache) = head_forward(&net.params, &net.config, &feat_source, &feat_template, true, rng)?;
        let pose = PoseForward::new(&raw);
        let next = pose.apply(&current);
        steps.push(StepCache {
            input: std::mem::replace(&mut current, next),
            encoder: enc_cache,
            head: head_cache,
            pose,
        });
    }
    Ok((
        PointCloud::new(current.clone())?,
        UnrolledCache {
            template: template_cache,
            steps,
            output: current,
        },
    ))
}

/// Back-propagate `dL/d(final source)` through the unrolled chain, adding
/// parameter gradients into `grads`.
pub fn train_backward(net: &PcrNet, cache: &UnrolledCache, d_est: &[Vector3<f64>], grads: &mut Grads) -> Result<()> {
    let mut d_outputs = vec![None; cache.steps.len()];
    if let Some(last) = d_outputs.last_mut() {
        *last = Some(d_est);
    }
    train_backward_all(net, cache, &d_outputs, grads)
}

/// Like [`train_backward`], with a loss gradient for the output of any
/// iteration. `d_outputs[i]` is `dL/d(source after iteration i)`, if any.
pub fn train_backward_all(
    net: &PcrNet,
    cache: &UnrolledCache,
    d_outputs: &[Option<&[Vector3<f64>]>],
    grads: &mut Grads,
) -> Result<()> {
    let n = cache.output.len();
    if d_outputs.len() != cache.steps.len() {
        return Err(Error::SizeMismatch {
            left: d_outputs.len(),
            right: cache.steps.len(),
        });
    }
    if let Some(bad) = d_outputs.iter().flatten().find(|d| d.len() != n) {
        return Err(Error::SizeMismatch {
            left: bad.len(),
            right: n,
        });
    }
    let mut d_points = vec![Vector3::zeros(); n];
    let mut d_feat_template = vec![0.0 as Real; net.config.feature_dim()];
    for (step, d_out) in cache.steps.iter().zip(d_outputs).rev() {
        if let Some(d) = d_out {
            for (acc, g) in d_points.iter_mut().zip(d.iter()) {
                *acc += g;
            }
        }
        let (d_pose, mut d_in) = apply_pose_backward(&step.pose, &step.input, &d_points);
        let d_pose: [Real; POSE_SIZE] = d_pose.map(|v| v as Real);
        let (d_feat_source, d_feat_t) = head_backward(&net.params, &step.head, &d_pose, grads)?;
        for (acc, g) in d_feat_template.iter_mut().zip(&d_feat_t) {
            *acc += g;
        }
        let d_cloud = encode_backward(&net.params, &step.encoder, &d_feat_source, grads)?;
        for (d, row) in d_in.iter_mut().zip(d_cloud.data().chunks_exact(3)) {
            *d += Vector3::new(row[0] as f64, row[1] as f64, row[2] as f64);
        }
        d_points = d_in;
    }
    encode_backward(&net.params, &cache.template, &d_feat_template, grads)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_transform, random_transform};
    use crate::losses::emd;
    use crate::pcrnet::{register_iterative, ModelConfig, Variant, OUTPUT_LAYER_NAME};
    use crate::testutil::{max_rel_error, numeric_grad};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_net(seed: u64, dropout: Real) -> PcrNet {
        let config = ModelConfig {
            variant: Variant::Iterative,
            encoder: vec![4, 4, 4, 8, 16],
            head: vec![12, 8],
            dropout,
        };
        let mut net = PcrNet::new(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        // Make the pose depend visibly on the input.
        net.params
            .layer_mut(OUTPUT_LAYER_NAME)
            .unwrap()
            .weight
            .data_mut()
            .iter_mut()
            .for_each(|w| *w *= 10.0);
        net
    }

    fn cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.2..0.2),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_unroll_matches_one_inference_step() {
        let net = tiny_net(1, 0.0);
        let (s, t) = (cloud(16, 1), cloud(16, 2));
        let (est, cache) = train_forward_iterative(&net, &s, &t, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let r = register_iterative(&net, &s, &t, 1, 1e-7).unwrap();
        assert_eq!(cache.transform(), r.transform);
        let replay = apply_transform(&r.transform, &s);
        assert_eq!(est, replay);
    }

    #[test]
    fn two_unrolls_replay_two_steps() {
        let net = tiny_net(2, 0.0);
        let t = cloud(16, 3);
        let s = apply_transform(&random_transform(&mut ChaCha8Rng::seed_from_u64(4), 30.0, 0.3), &t);
        let (est, cache) = train_forward_iterative(&net, &s, &t, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let r = register_iterative(&net, &s, &t, 2, 1e-30).unwrap();
        assert_eq!(r.iterations_used, 2);
        assert!((cache.transform().to_homogeneous() - r.transform.to_homogeneous()).norm() < 1e-6);
        let replay = apply_transform(&r.transform, &s);
        for (a, b) in est.points().iter().zip(replay.points()) {
            assert!((a - b).norm() < 1e-5);
        }
    }

    #[test]
    fn zero_unroll_rejected() {
        let net = tiny_net(1, 0.0);
        assert!(
            train_forward_iterative(&net, &cloud(4, 1), &cloud(4, 2), 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err()
        );
    }

    #[test]
    fn two_step_gradient_matches_finite_differences() {
        let net = tiny_net(5, 0.0);
        let t = cloud(8, 6);
        let s = apply_transform(&random_transform(&mut ChaCha8Rng::seed_from_u64(7), 30.0, 0.3), &t);
        let loss = |n: &PcrNet| -> f64 {
            let (est, _) = train_forward_iterative(n, &s, &t, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            emd(&est, &t).unwrap().value
        };
        let (est, cache) = train_forward_iterative(&net, &s, &t, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let l = emd(&est, &t).unwrap();
        let mut grads = net.params.grads_like();
        train_backward(&net, &cache, &l.grad, &mut grads).unwrap();

        for name in ["enc.0", "enc.4", "head.0", OUTPUT_LAYER_NAME] {
            let li = net.params.index_of(name).unwrap();
            let num = numeric_grad(&net.params.layers()[li].bias, 1e-4, |b| {
                let mut n = net.clone();
                n.params.layers_mut()[li].bias.copy_from_slice(b);
                loss(&n)
            });
            let err = max_rel_error(&grads.biases[li], &num);
            assert!(err < 1e-3, "{name}: {err}");
        }
    }
}
