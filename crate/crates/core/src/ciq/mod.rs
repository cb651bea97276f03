//! Contour-integral quadrature for `K^{1/2} u` and the sampler built on it.

pub mod elliptic;
pub mod quadrature;
pub mod solver;

use nalgebra::DVector;

pub use elliptic::{elliptic_k, jacobi_cn_dn, jacobi_sn_cn_dn};
pub use quadrature::{build_quadrature, QuadratureScheme};
pub use solver::{shifted_solve, SolveReport, DEFAULT_TOL};

use crate::bounds::FidelitySpec;
use crate::error::{invalid, Error, Result};
use crate::exact::{GpSample, Method};
use crate::kernel::{gram, GramMatrix, InputData, KernelParams};
use crate::precond::{nystrom_factor, NystromPreconditioner};
use crate::rng::{self, tag};

/// Analytic spectral envelope `[jitter, n σ_f² + jitter]` of a Gram matrix.
pub fn spectral_envelope(k: &GramMatrix) -> Result<(f64, f64)> {
    if !(k.jitter > 0.0) {
        return Err(invalid("jitter", "CIQ needs a strictly positive diagonal jitter"));
    }
    Ok((k.jitter, k.n() as f64 * k.variance + k.jitter))
}

/// `f̂ ≈ K^{1/2} u` with `Q` nodes on the analytic envelope and at most `J`
/// solver iterations.
pub fn ciq_sqrt_mv(
    k: &GramMatrix,
    u: &DVector<f64>,
    q: usize,
    j: usize,
    precond: Option<&NystromPreconditioner>,
) -> Result<(DVector<f64>, SolveReport)> {
    let (lo, hi) = spectral_envelope(k)?;
    let scheme = build_quadrature(lo, hi, q)?;
    ciq_sqrt_mv_with(k, u, &scheme, j, DEFAULT_TOL, precond)
}

/// [`ciq_sqrt_mv`] with an explicit quadrature scheme and tolerance.
pub fn ciq_sqrt_mv_with(
    k: &GramMatrix,
    u: &DVector<f64>,
    scheme: &QuadratureScheme,
    j: usize,
    tol: f64,
    precond: Option<&NystromPreconditioner>,
) -> Result<(DVector<f64>, SolveReport)> {
    if u.len() != k.n() {
        return Err(Error::DimensionMismatch {
            expected: k.n(),
            got: u.len(),
        });
    }
    let (solutions, report) = shifted_solve(&k.entries, &scheme.shifts, u, j, tol, precond)?;
    let mut combined = DVector::zeros(k.n());
    for (v, w) in solutions.iter().zip(&scheme.weights) {
        combined.axpy(*w, v, 1.0);
    }
    Ok((&k.entries * combined, report))
}

/// Draws `ŷ = K_ηξ^{1/2} u + √((1 − η)σ_ξ²) ξ` with `K_ηξ = gram(X, ησ_ξ²)`.
///
/// With `precond_rank = Some(k)` the shifted solves use a rank-`k` Nyström
/// preconditioner of `K_ηξ`.
pub fn ciq_sample(
    x: &InputData,
    params: &KernelParams,
    eta: f64,
    q: usize,
    j: usize,
    seed: u64,
    precond_rank: Option<usize>,
) -> Result<GpSample> {
    ciq_sample_with_report(x, params, eta, q, j, seed, precond_rank).map(|(s, _)| s)
}

/// [`ciq_sample`] that also returns the solver report.
pub fn ciq_sample_with_report(
    x: &InputData,
    params: &KernelParams,
    eta: f64,
    q: usize,
    j: usize,
    seed: u64,
    precond_rank: Option<usize>,
) -> Result<(GpSample, SolveReport)> {
    params.validate()?;
    let k = gram(x, params, eta * params.noise_variance)?;
    ciq_sample_from_gram(&k, params, eta, q, j, seed, precond_rank)
}

/// [`ciq_sample_with_report`] on a prebuilt `K_ηξ`.
pub fn ciq_sample_from_gram(
    k: &GramMatrix,
    params: &KernelParams,
    eta: f64,
    q: usize,
    j: usize,
    seed: u64,
    precond_rank: Option<usize>,
) -> Result<(GpSample, SolveReport)> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid("eta", format!("{eta} not in (0, 1)")));
    }
    let n = k.n();
    let pre = precond_rank.map(|r| nystrom_factor(k, r)).transpose()?;
    let u = DVector::from_vec(rng::standard_normal_vec(seed, tag::LATENT, n));
    let (f, report) = ciq_sqrt_mv(k, &u, q, j, pre.as_ref())?;
    let tail = ((1.0 - eta) * params.noise_variance).sqrt();
    let xi = rng::standard_normal_vec(seed, tag::NOISE, n);
    let y = DVector::from_fn(n, |i, _| f[i] + tail * xi[i]);
    let sample = GpSample {
        y,
        f: Some(f),
        method: if pre.is_some() {
            Method::CiqPreconditioned
        } else {
            Method::Ciq
        },
        params: *params,
        fidelity: FidelitySpec {
            eta,
            quadrature: Some(q),
            iterations: Some(j),
            ..FidelitySpec::default()
        },
        seed,
    };
    Ok((sample, report))
}
