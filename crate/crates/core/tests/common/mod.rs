//! Helpers shared by the integration tests.

#![allow(dead_code)]

pub mod tolerances;

use nalgebra::Point3;
use pcrnet::meshio::{parse_off, sample_mesh};
use pcrnet::{Mesh, PointCloud, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CHAIR_OFF: &[u8] = include_bytes!("../data/chair.off");

pub fn chair_mesh() -> Mesh {
    parse_off(CHAIR_OFF).expect("fixture parses")
}

/// The chair fixture sampled to `n` normalized points.
pub fn chair_cloud(n: usize, seed: u64) -> PointCloud {
    sample_mesh(&chair_mesh(), n, 10, &mut ChaCha8Rng::seed_from_u64(seed)).expect("fixture samples")
}

pub fn random_cloud(n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                )
            })
            .collect(),
    )
    .expect("finite points")
}

/// Central differences of `f` at `x`, dividing by the step actually taken
/// after rounding to `Real`.
pub fn central_diff(x: &[Real], h: f64, mut f: impl FnMut(&[Real]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = work[i];
            work[i] = (orig as f64 + h) as Real;
            let up_x = work[i] as f64;
            let up = f(&work);
            work[i] = (orig as f64 - h) as Real;
            let down_x = work[i] as f64;
            let down = f(&work);
            work[i] = orig;
            (up - down) / (up_x - down_x)
        })
        .collect()
}

/// Kink tolerance: one-sided slopes further apart than this fraction of the
/// largest slope mean a ReLU or max-pool switch lies inside the stencil.
pub const KINK_GAP: f64 = 0.002;

/// Central differences that step around non-differentiable points.
///
/// A coordinate whose forward and backward slopes disagree is retried at a
/// quarter and a sixteenth of the step. If the stencil still straddles a
/// kink the entry is `None` and takes no part in the comparison. Only the
/// numeric side decides this, so a wrong analytic gradient is never masked.
pub fn central_diff_kinks(x: &[Real], h: f64, mut f: impl FnMut(&[Real]) -> f64) -> Vec<Option<f64>> {
    let mut work = x.to_vec();
    // (forward slope, backward slope, central slope)
    let mut slopes = |work: &mut Vec<Real>, i: usize, h: f64| {
        let orig = work[i];
        let o = orig as f64;
        let mid = f(work);
        work[i] = (o + h) as Real;
        let (up_dx, up) = (work[i] as f64 - o, f(work));
        work[i] = (o - h) as Real;
        let (down_dx, down) = (work[i] as f64 - o, f(work));
        work[i] = orig;
        (
            (up - mid) / up_dx,
            (mid - down) / -down_dx,
            (up - down) / (up_dx - down_dx),
        )
    };
    let first: Vec<_> = (0..x.len()).map(|i| slopes(&mut work, i, h)).collect();
    let scale = first.iter().fold(1e-12f64, |m, s| m.max(s.2.abs()));
    first
        .iter()
        .enumerate()
        .map(|(i, &(fwd, bwd, central))| {
            if (fwd - bwd).abs() <= KINK_GAP * scale {
                return Some(central);
            }
            [h / 4.0, h / 16.0].iter().find_map(|&hs| {
                let (fwd, bwd, central) = slopes(&mut work, i, hs);
                ((fwd - bwd).abs() <= KINK_GAP * scale).then_some(central)
            })
        })
        .collect()
}

/// Same as [`central_diff`] for `f64` inputs.
pub fn central_diff_f64(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = work[i];
            work[i] = orig + h;
            let up = f(&work);
            work[i] = orig - h;
            let down = f(&work);
            work[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest absolute gap divided by the largest gradient magnitude on either side.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()))
        / scale
}

pub fn widen(v: &[Real]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

pub fn random_reals(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<Real> {
    (0..n).map(|_| rng.random_range(lo..hi) as Real).collect()
}
