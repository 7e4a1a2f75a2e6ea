//! Hermitian PSD constraints through the real embedding `[[Re, −Im], [Im, Re]]`.
//!
//! A Hermitian `N x N` matrix variable is represented by an unstructured real
//! symmetric `2N x 2N` PSD block `X`. Linear functionals only read the
//! structured part of `X` (the average of the two diagonal blocks and the
//! antisymmetric part of the off-diagonal block), which is itself PSD whenever
//! `X` is, so nothing is lost by leaving the other degrees of freedom free.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{svec_index, svec_scale};
use crate::error::{Result, SlatError};

/// Real embedding of a Hermitian matrix.
pub fn hermitian_embed(h: &DMatrix<Complex64>) -> Result<DMatrix<f64>> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(SlatError::dim("hermitian_embed needs a square matrix"));
    }
    let scale = h.iter().fold(1.0f64, |a, v| a.max(v.norm()));
    for i in 0..n {
        for j in 0..n {
            if (h[(i, j)] - h[(j, i)].conj()).norm() > 1e-12 * scale {
                return Err(SlatError::config(format!("matrix is not Hermitian at ({i}, {j})")));
            }
        }
    }
    Ok(DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let v = h[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    }))
}

/// Coefficient maps for a Hermitian `side x side` variable embedded in a
/// real PSD block of side `2 side` starting at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermitianForm {
    pub offset: usize,
    pub side: usize,
}

impl HermitianForm {
    pub fn new(offset: usize, side: usize) -> Self {
        Self { offset, side }
    }

    /// Side of the embedded real block.
    pub fn real_side(&self) -> usize {
        2 * self.side
    }

    /// Coefficient on the svec entry holding real entry `(p, q)` so that the
    /// variable contributes `X[p, q]`.
    fn entry(&self, p: usize, q: usize, weight: f64) -> (usize, f64) {
        let n2 = self.real_side();
        (self.offset + svec_index(n2, p, q), weight / svec_scale(p, q))
    }

    /// Linear form returning `Re Φ[i, j]`.
    pub fn re(&self, i: usize, j: usize) -> Vec<(usize, f64)> {
        let n = self.side;
        vec![self.entry(i, j, 0.5), self.entry(n + i, n + j, 0.5)]
    }

    /// Linear form returning `Im Φ[i, j]`.
    pub fn im(&self, i: usize, j: usize) -> Vec<(usize, f64)> {
        let n = self.side;
        vec![self.entry(n + i, j, 0.5), self.entry(n + j, i, -0.5)]
    }

    /// Linear form returning the real number `tr(G Φ)` for Hermitian `G`.
    pub fn trace_with(&self, g: &DMatrix<Complex64>) -> Vec<(usize, f64)> {
        let n = self.side;
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = g[(i, j)];
                if v.re != 0.0 {
                    out.extend(self.re(i, j).into_iter().map(|(c, w)| (c, w * v.re)));
                }
                if v.im != 0.0 {
                    out.extend(self.im(i, j).into_iter().map(|(c, w)| (c, w * v.im)));
                }
            }
        }
        out
    }

    /// Structured Hermitian part of the embedded block in `x`.
    pub fn extract(&self, x: &[f64]) -> DMatrix<Complex64> {
        let n = self.side;
        let eval = |form: Vec<(usize, f64)>| form.iter().map(|&(c, w)| w * x[c]).sum::<f64>();
        DMatrix::from_fn(n, n, |i, j| Complex64::new(eval(self.re(i, j)), eval(self.im(i, j))))
    }
}
