use rand::Rng;

use super::{Real, Tensor2};
use crate::error::{Error, Result};

/// `y = x·W + b` for a batch of rows. Applied to an `N × 3` cloud this is the
/// shared per-point layer.
pub fn dense_forward(x: &Tensor2, w: &Tensor2, b: &[Real]) -> Result<Tensor2> {
    if x.cols() != w.rows() || b.len() != w.cols() {
        return Err(Error::shape(
            "dense_forward",
            format!("x {:?}, W {:?}, b {}", x.shape(), w.shape(), b.len()),
        ));
    }
    let mut y = Tensor2::zeros(x.rows(), w.cols());
    for row in y.data_mut().chunks_exact_mut(b.len()) {
        row.copy_from_slice(b);
    }
    y.gemm(x, false, w, false, 1.0)?;
    y.debug_check_finite("dense_forward");
    Ok(y)
}

/// Gradients of `y = x·W + b`: `dx = dy·Wᵀ`, `dW = xᵀ·dy`, `db = Σ_rows dy`.
pub fn dense_backward(x: &Tensor2, w: &Tensor2, dy: &Tensor2) -> Result<(Tensor2, Tensor2, Vec<Real>)> {
    let mut dx = Tensor2::zeros(x.rows(), x.cols());
    let mut dw = Tensor2::zeros(w.rows(), w.cols());
    let mut db = vec![0.0; w.cols()];
    dense_backward_acc(x, w, dy, Some(&mut dx), &mut dw, &mut db)?;
    Ok((dx, dw, db))
}

/// Like [`dense_backward`] but adds into `dw`/`db` and overwrites `dx` only
/// when requested.
pub fn dense_backward_acc(
    x: &Tensor2,
    w: &Tensor2,
    dy: &Tensor2,
    dx: Option<&mut Tensor2>,
    dw: &mut Tensor2,
    db: &mut [Real],
) -> Result<()> {
    if x.cols() != w.rows() || dy.cols() != w.cols() || dy.rows() != x.rows() || db.len() != w.cols() {
        return Err(Error::shape(
            "dense_backward",
            format!("x {:?}, W {:?}, dy {:?}", x.shape(), w.shape(), dy.shape()),
        ));
    }
    dw.gemm(x, true, dy, false, 1.0)?;
    for row in dy.data().chunks_exact(db.len()) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    if let Some(dx) = dx {
        dx.gemm(dy, false, w, true, 0.0)?;
    }
    Ok(())
}

pub fn relu_forward(x: &Tensor2) -> Tensor2 {
    let mut y = x.clone();
    relu_inplace(&mut y);
    y
}

pub fn relu_inplace(x: &mut Tensor2) {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Passes `dy` where the forward input (or, equivalently, output) was
/// strictly positive; the subgradient at 0 is 0.
pub fn relu_backward(x: &Tensor2, dy: &Tensor2) -> Result<Tensor2> {
    if x.shape() != dy.shape() {
        return Err(Error::shape(
            "relu_backward",
            format!("{:?} vs {:?}", x.shape(), dy.shape()),
        ));
    }
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&xv, &g)| if xv > 0.0 { g } else { 0.0 })
        .collect();
    Tensor2::from_vec(x.rows(), x.cols(), data)
}

/// Column-wise max over rows and the row attaining it. Ties go to the lowest row.
pub fn maxpool_points(features: &Tensor2) -> Result<(Vec<Real>, Vec<usize>)> {
    if features.rows() == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut pooled = features.row(0).to_vec();
    let mut argmax = vec![0usize; features.cols()];
    for r in 1..features.rows() {
        for (c, &v) in features.row(r).iter().enumerate() {
            if v > pooled[c] {
                pooled[c] = v;
                argmax[c] = r;
            }
        }
    }
    Ok((pooled, argmax))
}

/// Route `dy[c]` back to row `argmax[c]` of column `c`.
pub fn maxpool_backward(argmax: &[usize], dy: &[Real], n_rows: usize) -> Result<Tensor2> {
    if argmax.len() != dy.len() || argmax.iter().any(|&r| r >= n_rows) {
        return Err(Error::shape(
            "maxpool_backward",
            format!("{} argmax entries, {} grads, {n_rows} rows", argmax.len(), dy.len()),
        ));
    }
    let cols = dy.len();
    let mut out = Tensor2::zeros(n_rows, cols);
    for (c, (&r, &g)) in argmax.iter().zip(dy).enumerate() {
        out.data_mut()[r * cols + c] = g;
    }
    Ok(out)
}

/// Per-unit multipliers from an inverted-dropout forward pass: 0 for dropped
/// units, `1 / (1 - p)` for kept ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub scale: Vec<Real>,
}

impl DropoutMask {
    pub fn keep_all(n: usize) -> Self {
        Self { scale: vec![1.0; n] }
    }

    pub fn kept(&self) -> usize {
        self.scale.iter().filter(|&&s| s != 0.0).count()
    }
}

pub fn dropout_forward<R: Rng + ?Sized>(
    x: &[Real],
    p_drop: Real,
    rng: &mut R,
    training: bool,
) -> Result<(Vec<Real>, DropoutMask)> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(Error::InvalidArgument(format!("dropout rate {p_drop} outside [0, 1)")));
    }
    if !training || p_drop == 0.0 {
        return Ok((x.to_vec(), DropoutMask::keep_all(x.len())));
    }
    let keep_scale = 1.0 / (1.0 - p_drop);
    let scale: Vec<Real> = x
        .iter()
        .map(|_| {
            if rng.random::<f64>() < p_drop as f64 {
                0.0
            } else {
                keep_scale
            }
        })
        .collect();
    let y = x.iter().zip(&scale).map(|(v, s)| v * s).collect();
    Ok((y, DropoutMask { scale }))
}

pub fn dropout_backward(mask: &DropoutMask, dy: &[Real]) -> Vec<Real> {
    dy.iter().zip(&mask.scale).map(|(g, s)| g * s).collect()
}
