//! Quadrature nodes for `A^{1/2} = A · (2/π) ∫₀^∞ (t²I + A)⁻¹ dt`, discretised
//! with the elliptic change of variables of Hale, Higham and Trefethen.
//!
//! With `m = λ_min`, `M = λ_max`, `k² = 1 − m/M` and `K = K(k)`, the nodes are
//! `u_q = (q − ½)K/Q`, and
//!
//! ```text
//! A^{1/2} ≈ A Σ_q ω_q (s_q I + A)⁻¹,  s_q = m sc²(u_q),
//!                                     ω_q = 2K√m dn(u_q) / (πQ cn²(u_q)).
//! ```
//!
//! The relative error on `[m, M]` decays like `exp(−2π²Q/(log(M/m) + 3))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::elliptic::{elliptic_k_complement, sn_cn_dn_complement};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureScheme {
    pub q: usize,
    /// Positive shifts `s_q`; node `q` solves `(s_q I + A) v = u`.
    pub shifts: Vec<f64>,
    pub weights: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl QuadratureScheme {
    /// Scalar version of the rational approximation, `Σ ω_q a / (s_q + a)`.
    pub fn apply_scalar(&self, a: f64) -> f64 {
        self.shifts
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * a / (s + a))
            .sum()
    }

    /// `M / m`.
    pub fn condition(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

/// Shifts and weights for spectra contained in `[lambda_min, lambda_max]`.
pub fn build_quadrature(lambda_min: f64, lambda_max: f64, q: usize) -> Result<QuadratureScheme> {
    if !(lambda_min > 0.0 && lambda_min.is_finite() && lambda_max.is_finite()) || lambda_max < lambda_min {
        return Err(invalid(
            "spectral interval",
            format!("need 0 < lambda_min <= lambda_max, got [{lambda_min}, {lambda_max}]"),
        ));
    }
    if q == 0 {
        return Err(invalid("Q", "must be >= 1"));
    }
    let m = lambda_min;
    let kp = (m / lambda_max).sqrt();
    let kk = elliptic_k_complement(kp);
    let sqrt_m = m.sqrt();
    let mut shifts = Vec::with_capacity(q);
    let mut weights = Vec::with_capacity(q);
    for i in 0..q {
        let u = (i as f64 + 0.5) * kk / q as f64;
        // Past K/2, reflect through u ↦ K − u so cn stays away from zero:
        // sc(u) = cn(v)/(k' sn(v)) and dn(u)/cn²(u) = dn(v)/(k' sn²(v)).
        let (sc, dn_over_cn2) = if 2.0 * u <= kk {
            let (sn, cn, dn) = sn_cn_dn_complement(u, kp);
            (sn / cn, dn / (cn * cn))
        } else {
            let (sn, cn, dn) = sn_cn_dn_complement(kk - u, kp);
            (cn / (kp * sn), dn / (kp * sn * sn))
        };
        shifts.push(m * sc * sc);
        weights.push(2.0 * kk * sqrt_m / (PI * q as f64) * dn_over_cn2);
    }
    Ok(QuadratureScheme {
        q,
        shifts,
        weights,
        lambda_min,
        lambda_max,
    })
}
