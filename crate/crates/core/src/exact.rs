//! Exact sampling by Cholesky factorisation, and whitening.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::FidelitySpec;
use crate::error::{invalid, Error, Result};
use crate::kernel::{gram, GramMatrix, InputData, KernelParams};
use crate::linalg;
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Rff,
    Ciq,
    #[serde(rename = "pciq")]
    CiqPreconditioned,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Rff => "rff",
            Method::Ciq => "ciq",
            Method::CiqPreconditioned => "pciq",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "rff" => Ok(Method::Rff),
            "ciq" => Ok(Method::Ciq),
            "pciq" => Ok(Method::CiqPreconditioned),
            other => Err(invalid("method", format!("unknown method {other:?}"))),
        }
    }
}

/// A noisy prior draw `y` and, where the sampler has one, the latent `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpSample {
    pub y: DVector<f64>,
    pub f: Option<DVector<f64>>,
    pub method: Method,
    pub params: KernelParams,
    pub fidelity: FidelitySpec,
    pub seed: u64,
}

impl GpSample {
    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Lower-triangular `L` with `L Lᵀ = K`.
pub fn cholesky_factor(k: &GramMatrix) -> Result<DMatrix<f64>> {
    linalg::cholesky(&k.entries)
}

/// `y = L u`, `L Lᵀ = K_ξ`, `u ~ N(0, I)` from the latent stream of `seed`.
pub fn exact_sample(x: &InputData, params: &KernelParams, seed: u64) -> Result<GpSample> {
    params.validate()?;
    let k = gram(x, params, params.noise_variance)?;
    let l = cholesky_factor(&k)?;
    let u = DVector::from_vec(rng::standard_normal_vec(seed, tag::LATENT, x.n()));
    Ok(GpSample {
        y: linalg::lower_mul(&l, &u),
        f: None,
        method: Method::Exact,
        params: *params,
        fidelity: FidelitySpec::default(),
        seed,
    })
}

/// `z = L⁻¹ y` for `L Lᵀ = K_ξ`.
pub fn whiten(y: &DVector<f64>, k_xi: &GramMatrix) -> Result<DVector<f64>> {
    let l = cholesky_factor(k_xi)?;
    whiten_with_factor(y, &l)
}

/// [`whiten`] with a precomputed factor.
pub fn whiten_with_factor(y: &DVector<f64>, l: &DMatrix<f64>) -> Result<DVector<f64>> {
    if y.len() != l.nrows() {
        return Err(Error::DimensionMismatch {
            expected: l.nrows(),
            got: y.len(),
        });
    }
    Ok(linalg::forward_substitution(l, y))
}
