//! Dense kernels shared by the samplers: Cholesky, triangular solves and the
//! matrix-free operator abstraction used by the Krylov solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric linear operator `x -> A x`.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>);
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, self, x, 0.0);
    }
}

/// Diagonal operator, mostly useful in tests and for scalar spectra.
#[derive(Debug, Clone)]
pub struct Diagonal(pub DVector<f64>);

impl SymmetricOperator for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.zip_zip_apply(&self.0, x, |o, d, v| *o = d * v);
    }
}

/// Lower Cholesky factor, left-looking and column oriented.
///
/// Fails on the first pivot that is not strictly positive.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let mut l = a.clone();
    let data = l.as_mut_slice();
    for j in 0..n {
        let (left, right) = data.split_at_mut(j * n);
        let col_j = &mut right[j..n];
        for k in 0..j {
            let col_k = &left[k * n + j..k * n + n];
            let ljk = col_k[0];
            if ljk != 0.0 {
                for (c, &lk) in col_j.iter_mut().zip(col_k) {
                    *c -= ljk * lk;
                }
            }
        }
        let pivot = col_j[0];
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let s = pivot.sqrt();
        col_j[0] = s;
        let inv = 1.0 / s;
        for c in col_j[1..].iter_mut() {
            *c *= inv;
        }
    }
    for j in 1..n {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    Ok(l)
}

/// Solves `L z = y` for lower-triangular `L`.
pub fn forward_substitution(l: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut z = y.clone();
    let data = l.as_slice();
    for j in 0..n {
        let col = &data[j * n..(j + 1) * n];
        let zj = z[j] / col[j];
        z[j] = zj;
        if zj != 0.0 {
            for i in j + 1..n {
                z[i] -= zj * col[i];
            }
        }
    }
    z
}

/// Solves `Lᵀ x = z` for lower-triangular `L`.
pub fn backward_substitution_transpose(l: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = z.clone();
    let data = l.as_slice();
    for j in (0..n).rev() {
        let col = &data[j * n..(j + 1) * n];
        let mut acc = x[j];
        for i in j + 1..n {
            acc -= col[i] * x[i];
        }
        x[j] = acc / col[j];
    }
    x
}

/// `L u` for lower-triangular `L`.
pub fn lower_mul(l: &DMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = DVector::zeros(n);
    let data = l.as_slice();
    for j in 0..n {
        let uj = u[j];
        if uj != 0.0 {
            let col = &data[j * n..(j + 1) * n];
            for i in j..n {
                y[i] += uj * col[i];
            }
        }
    }
    y
}

/// `log det(L Lᵀ)`.
pub fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves `(L Lᵀ) x = b`.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    backward_substitution_transpose(l, &forward_substitution(l, b))
}
