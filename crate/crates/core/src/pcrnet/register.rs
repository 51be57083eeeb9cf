use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{head_forward, PcrNet, PoseForward, RegistrationResult};
use crate::encoder::{encode, GlobalFeature};
use crate::error::{Error, Result};
use crate::geometry::{apply_transform, compose, convergence_delta, RigidTransform};
use crate::meshio::PointCloud;

/// Inference iteration cap for iterative registration.
pub const DEFAULT_MAX_ITER: usize = 20;
/// Convergence threshold on `‖T_i T_{i-1}⁻¹ − I‖_F`.
pub const DEFAULT_EPS: f64 = 1e-7;

fn predict(net: &PcrNet, source: &PointCloud, feat_template: &GlobalFeature) -> Result<RigidTransform> {
    let (feat_source, _) = encode(&net.params, &source.to_tensor())?;
    // Dropout is off at inference, so the generator is never drawn from.
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let (pose, _) = head_forward(
        &net.params,
        &net.config,
        &feat_source,
        feat_template,
        false,
        &mut unused,
    )?;
    Ok(PoseForward::new(&pose).transform())
}

/// One forward pass through encoder and head.
pub fn register_single_shot(net: &PcrNet, source: &PointCloud, template: &PointCloud) -> Result<RegistrationResult> {
    let start = Instant::now();
    let (feat_template, _) = encode(&net.params, &template.to_tensor())?;
    let t = predict(net, source, &feat_template)?;
    Ok(RegistrationResult {
        transform: t,
        per_iteration: vec![t],
        iterations_used: 1,
        converged: false,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Repeatedly predict a correction from the moved source against the fixed
/// template, moving the source each time, and compose the corrections with
/// the newest on the left. Stops at `max_iter` or once an update changes the
/// accumulated transform by less than `eps`.
pub fn register_iterative(
    net: &PcrNet,
    source: &PointCloud,
    template: &PointCloud,
    max_iter: usize,
    eps: f64,
) -> Result<RegistrationResult> {
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let start = Instant::now();
    let (feat_template, _) = encode(&net.params, &template.to_tensor())?;
    let mut current = source.clone();
    let mut total = RigidTransform::identity();
    let mut per_iteration = Vec::with_capacity(max_iter);
    let mut converged = false;
    for _ in 0..max_iter {
        let step = predict(net, &current, &feat_template)?;
        current = apply_transform(&step, &current);
        let next = compose(&step, &total);
        let delta = convergence_delta(&next, &total);
        per_iteration.push(step);
        total = next;
        if delta < eps {
            converged = true;
            break;
        }
    }
    Ok(RegistrationResult {
        transform: total,
        iterations_used: per_iteration.len(),
        per_iteration,
        converged,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_transform, rotation_error_deg};
    use crate::pcrnet::{ModelConfig, Variant, OUTPUT_LAYER_NAME};
    use nalgebra::Point3;
    use rand::Rng;

    fn cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.random(), rng.random::<f64>() * 0.5, rng.random::<f64>() * 0.2))
                .collect(),
        )
        .unwrap()
    }

    fn net(seed: u64) -> PcrNet {
        PcrNet::new(
            ModelConfig::tiny(Variant::Iterative),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    #[test]
    fn zeroed_output_layer_gives_identity() {
        let mut n = net(1);
        let out = n.params.layer_mut(OUTPUT_LAYER_NAME).unwrap();
        out.weight.fill(0.0);
        out.bias.iter_mut().for_each(|b| *b = 0.0);
        let r = register_single_shot(&n, &cloud(32, 1), &cloud(32, 2)).unwrap();
        assert_eq!(r.transform, RigidTransform::identity());
        assert_eq!(r.per_iteration, vec![r.transform]);
        assert_eq!(r.iterations_used, 1);
    }

    #[test]
    fn untrained_head_is_near_identity() {
        let r = register_single_shot(&net(2), &cloud(32, 1), &cloud(32, 2)).unwrap();
        assert!(rotation_error_deg(&r.transform, &RigidTransform::identity()) < 10.0);
    }

    #[test]
    fn one_iteration_equals_single_shot() {
        let n = net(3);
        let (s, t) = (cloud(40, 3), cloud(40, 4));
        let a = register_single_shot(&n, &s, &t).unwrap();
        let b = register_iterative(&n, &s, &t, 1, DEFAULT_EPS).unwrap();
        assert_eq!(a.transform, b.transform);
        assert_eq!(b.iterations_used, 1);
    }

    #[test]
    fn composition_replays_final_source() {
        let n = net(5);
        let t = cloud(40, 6);
        let gt = random_transform(&mut ChaCha8Rng::seed_from_u64(1), 45.0, 1.0);
        let s = apply_transform(&gt, &t);
        let r = register_iterative(&n, &s, &t, 6, DEFAULT_EPS).unwrap();
        assert_eq!(r.per_iteration.len(), r.iterations_used);
        assert!(r.composition_residual() < 1e-9);

        let mut stepwise = s.clone();
        for step in &r.per_iteration {
            stepwise = apply_transform(step, &stepwise);
        }
        let replay = apply_transform(&r.transform, &s);
        for (a, b) in replay.points().iter().zip(stepwise.points()) {
            assert!((a - b).norm() < 1e-5);
        }
    }

    #[test]
    fn converges_when_updates_vanish() {
        let mut n = net(7);
        let out = n.params.layer_mut(OUTPUT_LAYER_NAME).unwrap();
        out.weight.fill(0.0);
        let r = register_iterative(&n, &cloud(20, 1), &cloud(20, 2), 20, DEFAULT_EPS).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations_used, 1);
    }

    #[test]
    fn inference_is_deterministic() {
        let n = net(8);
        let (s, t) = (cloud(30, 1), cloud(30, 2));
        let a = register_iterative(&n, &s, &t, 5, DEFAULT_EPS).unwrap();
        let b = register_iterative(&n, &s, &t, 5, DEFAULT_EPS).unwrap();
        assert_eq!(a.transform, b.transform);
    }

    #[test]
    fn rejects_bad_settings() {
        let n = net(9);
        assert!(register_iterative(&n, &cloud(5, 1), &cloud(5, 2), 0, 1e-7).is_err());
        assert!(register_iterative(&n, &cloud(5, 1), &cloud(5, 2), 3, 0.0).is_err());
    }
}
