//! Rank-k Nyström preconditioner from a greedy pivoted partial Cholesky.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::{gram, sample_inputs, GramMatrix, KernelParams};
use crate::linalg;
use crate::rng::{self, tag};

/// `K̃ = F Fᵀ` approximating the noise-free kernel, plus the noise `ησ_ξ²`
/// that the preconditioner adds back: `P = K̃ + noise · I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NystromPreconditioner {
    pub rank: usize,
    pub pivots: Vec<usize>,
    /// `n × rank`.
    pub factor: DMatrix<f64>,
    pub noise: f64,
    /// Diagonal of `K − jitter·I − F Fᵀ` after the last pivot.
    pub residual_diagonal: DVector<f64>,
    /// `Fᵀ F`, cached for the Woodbury core.
    gram_factor: DMatrix<f64>,
}

/// Default rank `⌊√n⌋`.
pub fn default_rank(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(1)
}

/// Pivoted partial Cholesky of `K − jitter·I` with greedy maximum-diagonal
/// pivoting. Stops early if the residual diagonal vanishes, so `rank` may be
/// below `k` for numerically low-rank kernels.
pub fn nystrom_factor(k_mat: &GramMatrix, k: usize) -> Result<NystromPreconditioner> {
    let n = k_mat.n();
    if k == 0 || k > n {
        return Err(invalid("k", format!("rank {k} not in [1, {n}]")));
    }
    let a = &k_mat.entries;
    let jitter = k_mat.jitter;
    let mut diag: DVector<f64> = DVector::from_fn(n, |i, _| a[(i, i)] - jitter);
    let scale = diag.max().max(0.0);
    let mut factor = DMatrix::<f64>::zeros(n, k);
    let mut pivots = Vec::with_capacity(k);
    for t in 0..k {
        let (p, &dp) = diag
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if dp <= 1e-12 * scale || dp <= 0.0 {
            break;
        }
        let root = dp.sqrt();
        for i in 0..n {
            let mut v = a[(i, p)];
            if i == p {
                v -= jitter;
            }
            for s in 0..t {
                v -= factor[(i, s)] * factor[(p, s)];
            }
            factor[(i, t)] = v / root;
        }
        for i in 0..n {
            diag[i] = (diag[i] - factor[(i, t)] * factor[(i, t)]).max(0.0);
        }
        diag[p] = 0.0;
        pivots.push(p);
    }
    let rank = pivots.len();
    let factor = factor.columns(0, rank).into_owned();
    let gram_factor = factor.transpose() * &factor;
    Ok(NystromPreconditioner {
        rank,
        pivots,
        factor,
        noise: jitter,
        residual_diagonal: diag,
        gram_factor,
    })
}

/// `(F Fᵀ + c I)⁻¹` for a fixed `c`, applied through Woodbury.
#[derive(Debug, Clone)]
pub struct ShiftedInverse<'a> {
    factor: &'a DMatrix<f64>,
    core: DMatrix<f64>,
    c: f64,
}

impl ShiftedInverse<'_> {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.factor.ncols() == 0 {
            return v / self.c;
        }
        let ftv = self.factor.transpose() * v;
        let t = linalg::cholesky_solve(&self.core, &ftv);
        (v - self.factor * t) / self.c
    }
}

impl NystromPreconditioner {
    pub fn n(&self) -> usize {
        self.factor.nrows()
    }

    /// Inverse of `F Fᵀ + (noise + shift) I`.
    pub fn shifted(&self, shift: f64) -> Result<ShiftedInverse<'_>> {
        let c = self.noise + shift;
        if !(c > 0.0) {
            return Err(invalid("noise + shift", format!("{c} must be > 0")));
        }
        let mut core = self.gram_factor.clone();
        for i in 0..core.nrows() {
            core[(i, i)] += c;
        }
        Ok(ShiftedInverse {
            factor: &self.factor,
            core: linalg::cholesky(&core)?,
            c,
        })
    }

    /// `(F Fᵀ + noise·I)⁻¹ v`.
    pub fn apply_inverse(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.shifted(0.0)?.apply(v))
    }

    /// `(F Fᵀ + noise·I) v`.
    pub fn apply_forward(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.factor * (self.factor.transpose() * v) + v * self.noise
    }
}

/// `1 + 2 λ_{k+1} √(4k(n − k) + 1) / (ησ_ξ²)`.
pub fn preconditioned_condition_bound(lambda_kp1: f64, n: usize, eta: f64, sigma_xi2: f64, k: usize) -> f64 {
    let (n, k) = (n as f64, k as f64);
    1.0 + 2.0 * lambda_kp1 * (4.0 * k * (n - k) + 1.0).sqrt() / (eta * sigma_xi2)
}

/// `1 + 4 λ_{k+1} n^{3/4} / (ησ_ξ²)`, the simplified form for `k = ⌊√n⌋`.
pub fn preconditioned_condition_bound_simplified(lambda_kp1: f64, n: usize, eta: f64, sigma_xi2: f64) -> f64 {
    1.0 + 4.0 * lambda_kp1 * (n as f64).powf(0.75) / (eta * sigma_xi2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub lengthscale: f64,
    pub metric: f64,
}

/// Largest eigenvalue of `P⁻¹K − I` for `K = K_ηξ` and `P` its rank-`k`
/// Nyström preconditioner, by power iteration in the `P` inner product where
/// the operator is self-adjoint.
pub fn preconditioner_deviation(k_mat: &GramMatrix, p: &NystromPreconditioner, seed: u64, iters: usize) -> Result<f64> {
    let n = k_mat.n();
    let inv = p.shifted(0.0)?;
    let mut x = DVector::from_vec(rng::standard_normal_vec(seed, tag::PROBE, n));
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let px = p.apply_forward(&x);
        let kx = &k_mat.entries * &x;
        let diff = kx - &px;
        let num = x.dot(&diff);
        let den = x.dot(&px);
        let next = num / den;
        let y = inv.apply(&diff);
        let norm = y.norm();
        let converged = (next - estimate).abs() <= 1e-10 * next.abs();
        estimate = next;
        if norm == 0.0 || converged {
            break;
        }
        x = y / norm;
    }
    Ok(estimate)
}

/// Preconditioner quality across input sizes and lengthscales.
///
/// Inputs for each `n` are drawn once (seed derived from `seed` and `n`) and
/// shared across lengthscales. `rank` maps `n` to the Nyström rank.
pub fn effectiveness_sweep(
    n_list: &[usize],
    lengthscales: &[f64],
    params: &KernelParams,
    eta: f64,
    rank: impl Fn(usize) -> usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(n_list.len() * lengthscales.len());
    for &n in n_list {
        let x = sample_inputs(n, params, rng::derive_seed(seed, &[n as u64]))?;
        for &l in lengthscales {
            let p_l = params.with_lengthscale(l);
            p_l.validate()?;
            let k = gram(&x, &p_l, eta * p_l.noise_variance)?;
            let pre = nystrom_factor(&k, rank(n).clamp(1, n))?;
            let metric = preconditioner_deviation(&k, &pre, rng::derive_seed(seed, &[n as u64, l.to_bits()]), 500)?;
            rows.push(SweepRow { n, lengthscale: l, metric });
        }
    }
    Ok(rows)
}
