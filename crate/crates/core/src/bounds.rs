//! Closed-form fidelity-parameter calculators and divergence inequalities.
//!
//! Everything here is a pure function of its arguments. Noise is passed as a
//! variance `sigma_xi2 = σ_ξ²` throughout; `σ_ξ` is its square root.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::kernel::GramMatrix;
use crate::linalg;

/// Target total-variation budget plus the method-specific fidelity knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelitySpec {
    /// TV budget ε.
    pub epsilon: f64,
    /// RFF failure probability δ.
    pub delta: f64,
    /// Quadrature error budget δ_Q.
    /// Defaults to half its cap when unset.
    #[serde(rename = "delta_Q")]
    pub delta_q: Option<f64>,
    /// Fraction η of the noise folded into the kernel before CIQ.
    pub eta: f64,
    #[serde(rename = "D")]
    pub features: Option<usize>,
    #[serde(rename = "Q")]
    pub quadrature: Option<usize>,
    #[serde(rename = "J")]
    pub iterations: Option<usize>,
    /// Pseudo-constant absorbing the negligible terms of the iteration bounds.
    pub c_tilde: f64,
}

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_ETA: f64 = 0.5;

impl Default for FidelitySpec {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            delta: DEFAULT_DELTA,
            delta_q: None,
            eta: DEFAULT_ETA,
            features: None,
            quadrature: None,
            iterations: None,
            c_tilde: 0.0,
        }
    }
}

impl FidelitySpec {
    /// RFF fidelity: `D` from [`rff_min_features`].
    pub fn for_rff(n: usize, epsilon: f64, delta: f64, sigma_xi2: f64) -> Result<Self> {
        let features = rff_min_features(n, epsilon, delta, sigma_xi2)?;
        Ok(Self {
            epsilon,
            delta,
            features: Some(features),
            ..Self::default()
        })
    }

    /// CIQ fidelity: `Q` from [`ciq_min_quadrature`], `J` from
    /// [`ciq_min_iterations`]. `delta_q` defaults to half its cap.
    pub fn for_ciq(
        n: usize,
        epsilon: f64,
        eta: f64,
        sigma_xi2: f64,
        delta_q: Option<f64>,
        c_tilde: f64,
    ) -> Result<Self> {
        check_open_unit("eta", eta)?;
        let delta_q = delta_q.unwrap_or_else(|| default_delta_q(epsilon, eta, sigma_xi2));
        let quadrature = ciq_min_quadrature(n, eta, sigma_xi2, delta_q)?;
        let iterations = ciq_min_iterations(n, eta, sigma_xi2, epsilon, delta_q, quadrature)?;
        let spec = Self {
            epsilon,
            delta_q: Some(delta_q),
            eta,
            quadrature: Some(quadrature),
            iterations: Some(iterations),
            c_tilde,
            ..Self::default()
        };
        spec.validate(sigma_xi2)?;
        Ok(spec)
    }

    /// Checks ranges, and the δ_Q cap whenever CIQ parameters are populated.
    pub fn validate(&self, sigma_xi2: f64) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(invalid("epsilon", format!("{} not in (0, 1]", self.epsilon)));
        }
        check_open_unit("delta", self.delta)?;
        check_open_unit("eta", self.eta)?;
        if let Some(d) = self.features {
            if d < 2 || d % 2 != 0 {
                return Err(invalid("D", format!("{d} must be even and >= 2")));
            }
        }
        if self.quadrature.is_some() || self.iterations.is_some() {
            let cap = delta_q_cap(self.epsilon, self.eta, sigma_xi2);
            let delta_q = self.delta_q.unwrap_or(0.5 * cap);
            if !(delta_q > 0.0 && delta_q < cap) {
                return Err(Error::ConstraintViolation { delta_q, cap });
            }
        }
        Ok(())
    }
}

fn check_open_unit(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} not in (0, 1)")))
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} must be > 0")))
    }
}

/// Upper limit `ε σ_ξ √(1 - η)` on δ_Q.
pub fn delta_q_cap(epsilon: f64, eta: f64, sigma_xi2: f64) -> f64 {
    epsilon * sigma_xi2.sqrt() * (1.0 - eta).sqrt()
}

/// Half the δ_Q cap.
pub fn default_delta_q(epsilon: f64, eta: f64, sigma_xi2: f64) -> f64 {
    0.5 * delta_q_cap(epsilon, eta, sigma_xi2)
}

fn headroom(epsilon: f64, eta: f64, sigma_xi2: f64, delta_q: f64) -> Result<f64> {
    let cap = delta_q_cap(epsilon, eta, sigma_xi2);
    if delta_q > 0.0 && delta_q < cap {
        Ok(cap - delta_q)
    } else {
        Err(Error::ConstraintViolation { delta_q, cap })
    }
}

fn ceil_count(x: f64) -> usize {
    if x.is_nan() || x <= 1.0 {
        1
    } else {
        x.ceil() as usize
    }
}

/// Which algebraic form of the RFF feature-count bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RffBoundForm {
    /// `8 log(n/√δ) n² / (8 ε² σ_ξ⁴)`, factors kept as written.
    Printed,
    /// `log(n/√δ) n² / (ε² σ_ξ⁴)`.
    Simplified,
}

/// Smallest even `D` meeting the RFF feature-count bound.
pub fn rff_min_features(n: usize, epsilon: f64, delta: f64, sigma_xi2: f64) -> Result<usize> {
    rff_min_features_with(RffBoundForm::Printed, n, epsilon, delta, sigma_xi2)
}

pub fn rff_min_features_with(
    form: RffBoundForm,
    n: usize,
    epsilon: f64,
    delta: f64,
    sigma_xi2: f64,
) -> Result<usize> {
    let raw = rff_feature_bound(form, n, epsilon, delta, sigma_xi2)?;
    let mut d = raw.ceil().max(2.0) as usize;
    if d % 2 == 1 {
        d += 1;
    }
    Ok(d)
}

/// Unrounded RFF feature-count bound.
pub fn rff_feature_bound(
    form: RffBoundForm,
    n: usize,
    epsilon: f64,
    delta: f64,
    sigma_xi2: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    check_positive("epsilon", epsilon)?;
    check_open_unit("delta", delta)?;
    check_positive("sigma_xi2", sigma_xi2)?;
    let n = n as f64;
    let log_term = (n / delta.sqrt()).ln();
    let s4 = sigma_xi2 * sigma_xi2;
    Ok(match form {
        RffBoundForm::Printed => 8.0 * log_term * n * n / (8.0 * epsilon * epsilon * s4),
        RffBoundForm::Simplified => log_term * n * n / (epsilon * epsilon * s4),
    })
}

/// Per-element kernel-error threshold `ε'/n` with `ε' = √8 σ_ξ² ε`: the event
/// the RFF feature-count bound guarantees with probability `1 - δ`.
pub fn rff_element_budget(n: usize, epsilon: f64, sigma_xi2: f64) -> f64 {
    8f64.sqrt() * sigma_xi2 * epsilon / n as f64
}

/// Smallest `Q` with `Q ≥ (log(n/(ησ_ξ²)) + 3)(−log δ_Q) / (2π²)`.
pub fn ciq_min_quadrature(n: usize, eta: f64, sigma_xi2: f64, delta_q: f64) -> Result<usize> {
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    check_positive("eta", eta)?;
    check_positive("sigma_xi2", sigma_xi2)?;
    if !(delta_q > 0.0 && delta_q < 1.0) {
        return Err(Error::Domain(format!(
            "delta_Q = {delta_q} must lie in (0, 1) so that -log(delta_Q) > 0"
        )));
    }
    let zeta = n as f64 / (eta * sigma_xi2);
    let q = (zeta.ln() + 3.0) * (-delta_q.ln()) / (2.0 * PI * PI);
    Ok(ceil_count(q))
}

/// Lanczos iterations from the exact rearranged CIQ error bound, with
/// `κ = n/(ησ_ξ²) + 1` and `λ_n = ησ_ξ²`.
pub fn ciq_min_iterations(
    n: usize,
    eta: f64,
    sigma_xi2: f64,
    epsilon: f64,
    delta_q: f64,
    q: usize,
) -> Result<usize> {
    Ok(ceil_count(ciq_iteration_bound(n, eta, sigma_xi2, epsilon, delta_q, q)?))
}

/// Unrounded version of [`ciq_min_iterations`].
pub fn ciq_iteration_bound(
    n: usize,
    eta: f64,
    sigma_xi2: f64,
    epsilon: f64,
    delta_q: f64,
    q: usize,
) -> Result<f64> {
    if n == 0 || q == 0 {
        return Err(invalid("n/Q", "must be >= 1"));
    }
    check_open_unit("eta", eta)?;
    check_positive("sigma_xi2", sigma_xi2)?;
    let room = headroom(epsilon, eta, sigma_xi2, delta_q)?;
    let nf = n as f64;
    let lambda_n = eta * sigma_xi2;
    let kappa = nf / lambda_n + 1.0;
    let sk = kappa.sqrt();
    let prefactor = 1.0 / ((sk - 1.0).ln() - (sk + 1.0).ln());
    let arg = PI * room / (2.0 * q as f64 * lambda_n.sqrt() * kappa * nf.sqrt() * (5.0 * sk).ln());
    Ok(1.0 + prefactor * arg.ln())
}

/// Simplified large-`n` form of the CIQ iteration bound,
/// `1 + √n/(2√η σ_ξ) · (log n^{3/2} − log(π(εσ_ξ√(1−η) − δ_Q)) + 2 log log n + C)`.
pub fn ciq_min_iterations_asymptotic(
    n: usize,
    eta: f64,
    sigma_xi2: f64,
    epsilon: f64,
    delta_q: f64,
    c: f64,
) -> Result<usize> {
    if n < 3 {
        return Err(Error::Domain("asymptotic form needs n >= 3".into()));
    }
    check_open_unit("eta", eta)?;
    let room = headroom(epsilon, eta, sigma_xi2, delta_q)?;
    let nf = n as f64;
    let sigma = sigma_xi2.sqrt();
    let j = 1.0
        + nf.sqrt() / (2.0 * eta.sqrt() * sigma)
            * (1.5 * nf.ln() - (PI * room).ln() + 2.0 * nf.ln().ln() + c);
    Ok(ceil_count(j))
}

/// Iterations sufficient with a rank-⌊√n⌋ Nyström preconditioner:
/// `1 + √λ_{k+1} n^{3/8}/(√η σ_ξ) · ((5/4) log n − log(εσ_ξ√(1−η) − δ_Q) + C̃')`.
pub fn precond_min_iterations(
    lambda_kp1: f64,
    n: usize,
    eta: f64,
    sigma_xi2: f64,
    epsilon: f64,
    delta_q: f64,
    c_tilde: f64,
) -> Result<usize> {
    if !(lambda_kp1 >= 0.0) {
        return Err(invalid("lambda_kp1", "must be >= 0"));
    }
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    check_open_unit("eta", eta)?;
    let room = headroom(epsilon, eta, sigma_xi2, delta_q)?;
    let nf = n as f64;
    let prefactor = lambda_kp1.sqrt() * nf.powf(0.375) / (eta.sqrt() * sigma_xi2.sqrt());
    let j = 1.0 + prefactor * (1.25 * nf.ln() - room.ln() + c_tilde);
    Ok(ceil_count(j))
}

/// Eigenvalue-decay envelope `λ_k ≲ n σ_f c₂ exp(−c₁ k^{1/d})` for smooth
/// radial kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayModel {
    pub c1: f64,
    pub c2: f64,
    pub sigma_f: f64,
    pub dim: usize,
}

impl DecayModel {
    pub fn new(c1: f64, c2: f64, sigma_f: f64, dim: usize) -> Result<Self> {
        check_positive("c1", c1)?;
        check_positive("c2", c2)?;
        check_positive("sigma_f", sigma_f)?;
        if dim == 0 {
            return Err(invalid("dim", "must be >= 1"));
        }
        Ok(Self {
            c1,
            c2,
            sigma_f,
            dim,
        })
    }
}

/// Asymptotic regime of the preconditioned iteration count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// γ > 1: J = O(n^{7/8} log n).
    #[serde(rename = "i")]
    I,
    /// 0 < γ < 1: J = O((log n)²).
    #[serde(rename = "ii")]
    II,
    /// γ < 0: J = O(1).
    #[serde(rename = "iii")]
    III,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRegime {
    pub gamma: f64,
    pub regime: Regime,
    /// Order-of-magnitude iteration estimate for the regime.
    pub j_order: f64,
}

/// `γ = (7/8) log n − (c₁/2) n^{1/d}` and its regime. Ties at γ ∈ {0, 1}
/// go to the neighbouring regime with the larger iteration count.
pub fn decay_regime(n: usize, model: &DecayModel) -> DecayRegime {
    let nf = n as f64;
    let gamma = 0.875 * nf.ln() - 0.5 * model.c1 * nf.powf(1.0 / model.dim as f64);
    let regime = if gamma >= 1.0 {
        Regime::I
    } else if gamma >= 0.0 {
        Regime::II
    } else {
        Regime::III
    };
    let ln = nf.ln();
    let j_order = match regime {
        Regime::I => nf.powf(0.875) * ln,
        Regime::II => ln * ln,
        Regime::III => 1.0,
    };
    DecayRegime {
        gamma,
        regime,
        j_order,
    }
}

/// Concrete iteration count for the regime of [`decay_regime`], obtained by
/// feeding the decay envelope through [`precond_min_iterations`]' bound.
pub fn decay_regime_iterations(
    n: usize,
    model: &DecayModel,
    eta: f64,
    sigma_xi2: f64,
    epsilon: f64,
    delta_q: f64,
    c_tilde: f64,
) -> Result<usize> {
    check_open_unit("eta", eta)?;
    let room = headroom(epsilon, eta, sigma_xi2, delta_q)?;
    let nf = n.max(2) as f64;
    let ln = nf.ln();
    let prefactor = (model.c2 * model.sigma_f).sqrt() / (eta.sqrt() * sigma_xi2.sqrt());
    let tail = 1.25 * ln - room.ln() + c_tilde;
    let j = match decay_regime(n, model).regime {
        Regime::I => 1.0 + prefactor * nf.powf(0.875) * tail,
        Regime::II => 1.0 + prefactor * (31.0 / 32.0 * ln * ln + tail),
        Regime::III => 1.0 + prefactor * tail / ln,
    };
    Ok(ceil_count(j))
}

/// `n σ_f c₂ exp(−c₁ k^{1/d})`.
pub fn belkin_lambda_bound(k: usize, n: usize, model: &DecayModel) -> f64 {
    n as f64
        * model.sigma_f
        * model.c2
        * (-model.c1 * (k as f64).powf(1.0 / model.dim as f64)).exp()
}

/// `κ(K_ηξ) ≤ n σ_f² / (ησ_ξ²) + 1`.
pub fn condition_number_bound(n: usize, eta: f64, sigma_xi2: f64, sigma_f2: f64) -> f64 {
    n as f64 * sigma_f2 / (eta * sigma_xi2) + 1.0
}

/// The two terms of the CIQ error bound and their combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiqErrorBound {
    /// Quadrature term `exp(−2Qπ²/(log κ + 3))`.
    pub eps_q: f64,
    /// Krylov factor `B(Q, J)`.
    pub b: f64,
    /// `eps_q + b · ‖u‖₂`.
    pub total: f64,
}

pub fn ciq_error_bound(q: usize, j: usize, kappa: f64, lambda_n: f64, norm_u: f64) -> CiqErrorBound {
    let qf = q as f64;
    let eps_q = (-2.0 * qf * PI * PI / (kappa.ln() + 3.0)).exp();
    let sk = kappa.sqrt();
    let rho = (sk - 1.0) / (sk + 1.0);
    let b = 2.0 * qf * (5.0 * sk).ln() * kappa * lambda_n.sqrt() / PI
        * rho.powi(j.saturating_sub(1) as i32);
    CiqErrorBound {
        eps_q,
        b,
        total: eps_q + b * norm_u,
    }
}

/// `KL(N(0, K̂) ‖ N(0, K)) = ½(tr(K⁻¹K̂) − n + log|K| − log|K̂|)`.
pub fn kl_gaussian_marginal(k_hat: &GramMatrix, k: &GramMatrix) -> Result<f64> {
    kl_gaussian_dense(&k_hat.entries, &k.entries)
}

/// [`kl_gaussian_marginal`] on raw covariance matrices.
pub fn kl_gaussian_dense(k_hat: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<f64> {
    let n = k.nrows();
    if k_hat.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: k_hat.nrows(),
        });
    }
    let l = linalg::cholesky(k)?;
    let l_hat = linalg::cholesky(k_hat)?;
    // tr(K⁻¹ K̂) = ‖L⁻¹ L̂‖_F²
    let mut trace = 0.0;
    for c in 0..n {
        let col = l_hat.column(c).clone_owned();
        let m = linalg::forward_substitution(&l, &col);
        trace += m.norm_squared();
    }
    let kl = 0.5
        * (trace - n as f64 + linalg::log_det_from_cholesky(&l)
            - linalg::log_det_from_cholesky(&l_hat));
    Ok(kl.max(0.0))
}

/// `‖E‖_F² / (4σ_ξ⁴)`.
pub fn kl_frobenius_bound(e_frobenius: f64, sigma_xi2: f64) -> f64 {
    e_frobenius * e_frobenius / (4.0 * sigma_xi2 * sigma_xi2)
}

/// Pinsker: `TV ≤ √(KL/2)`, clamped to the TV range.
pub fn tv_from_kl(kl: f64) -> Result<f64> {
    if !(kl >= 0.0) {
        return Err(invalid("kl", format!("{kl} must be >= 0")));
    }
    Ok((kl / 2.0).sqrt().min(1.0))
}

/// Range `(½ − τ/2, ½ + τ/2)` of error rates any decision rule can achieve
/// between two models at total variation τ.
pub fn error_rate_bounds(tv: f64) -> Result<(f64, f64)> {
    check_tv(tv)?;
    Ok((0.5 - 0.5 * tv, 0.5 + 0.5 * tv))
}

/// Smallest ε for which TV ≤ 2ε certifies ε-indistinguishability.
pub fn indistinguishability_epsilon(tv: f64) -> Result<f64> {
    check_tv(tv)?;
    Ok(tv / 2.0)
}

fn check_tv(tv: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tv) {
        Ok(())
    } else {
        Err(invalid("tv", format!("{tv} not in [0, 1]")))
    }
}

/// Mean of the χ_n distribution, `√2 Γ((n+1)/2) / Γ(n/2)`.
pub fn chi_mean(n: usize) -> f64 {
    let nf = n as f64;
    2f64.sqrt() * (ln_gamma((nf + 1.0) / 2.0) - ln_gamma(nf / 2.0)).exp()
}
