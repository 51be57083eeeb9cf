//! Central finite differences for unit-level gradient checks.

use crate::nncore::Real;

/// `∂f/∂x_i ≈ (f(x + h e_i) − f(x − h e_i)) / 2h` for every coordinate.
pub fn numeric_grad(x: &[Real], h: f64, f: impl Fn(&[Real]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = work[i];
            work[i] = (orig as f64 + h) as Real;
            let up = f(&work);
            let h_up = work[i] as f64 - orig as f64;
            work[i] = (orig as f64 - h) as Real;
            let down = f(&work);
            let h_down = orig as f64 - work[i] as f64;
            work[i] = orig;
            (up - down) / (h_up + h_down)
        })
        .collect()
}

/// Largest absolute disagreement, relative to the largest gradient magnitude.
pub fn max_rel_error(analytic: &[Real], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .map(|&a| (a as f64).abs())
        .chain(numeric.iter().map(|n| n.abs()))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, n)| (a as f64 - n).abs())
        .fold(0.0, f64::max)
        / scale
}
