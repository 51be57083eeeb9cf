use super::Real;
use crate::error::{Error, Result};

/// Row-major 2D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<Real>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Real>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Tensor2::from_vec",
                format!("{} values for {rows}×{cols}", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row_vector(values: &[Real]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Real> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[Real] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> Real {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Real) {
        self.data[r * self.cols + c] = v;
    }

    pub fn fill(&mut self, v: Real) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn debug_check_finite(&self, op: &str) {
        debug_assert!(self.is_finite(), "non-finite value after {op}");
    }

    /// `self = op(a) · op(b) + beta · self`, where `op` optionally transposes.
    pub fn gemm(&mut self, a: &Tensor2, trans_a: bool, b: &Tensor2, trans_b: bool, beta: Real) -> Result<()> {
        let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
        let (k2, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
        if k != k2 || self.rows != m || self.cols != n {
            return Err(Error::shape(
                "gemm",
                format!("({m}×{k}) · ({k2}×{n}) into {}×{}", self.rows, self.cols),
            ));
        }
        let (rsa, csa) = if trans_a { (1, a.cols) } else { (a.cols, 1) };
        let (rsb, csb) = if trans_b { (1, b.cols) } else { (b.cols, 1) };
        if m == 0 || n == 0 {
            return Ok(());
        }
        if k == 0 {
            self.data.iter_mut().for_each(|x| *x *= beta);
            return Ok(());
        }
        // SAFETY: shapes and strides checked above describe in-bounds views of
        // `a`, `b` and `self`; `self` does not alias `a` or `b` (&mut borrow).
        unsafe {
            gemm_raw(
                m,
                k,
                n,
                a.data.as_ptr(),
                rsa as isize,
                csa as isize,
                b.data.as_ptr(),
                rsb as isize,
                csb as isize,
                beta,
                self.data.as_mut_ptr(),
                self.cols as isize,
                1,
            );
        }
        Ok(())
    }

    /// `op(a) · op(b)` into a fresh tensor.
    pub fn matmul(a: &Tensor2, trans_a: bool, b: &Tensor2, trans_b: bool) -> Result<Tensor2> {
        let m = if trans_a { a.cols } else { a.rows };
        let n = if trans_b { b.rows } else { b.cols };
        let mut out = Tensor2::zeros(m, n);
        out.gemm(a, trans_a, b, trans_b, 0.0)?;
        Ok(out)
    }
}

#[allow(clippy::too_many_arguments)]
unsafe fn gemm_raw(
    m: usize,
    k: usize,
    n: usize,
    a: *const Real,
    rsa: isize,
    csa: isize,
    b: *const Real,
    rsb: isize,
    csb: isize,
    beta: Real,
    c: *mut Real,
    rsc: isize,
    csc: isize,
) {
    #[cfg(not(feature = "f64"))]
    matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    #[cfg(feature = "f64")]
    matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
}
