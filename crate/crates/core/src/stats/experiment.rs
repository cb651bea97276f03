//! Rejection-rate experiment: for each `(n, fidelity)` cell, draw `N`
//! approximate samples, whiten each with the true `K_ξ`, test for normality
//! and report the fraction rejected.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cvm::{binomial_ci, critical_value, cvm_test};
use crate::bounds::{ciq_min_quadrature, default_delta_q, DEFAULT_EPSILON, DEFAULT_ETA};
use crate::ciq::ciq_sample_from_gram;
use crate::error::{invalid, Error, Result};
use crate::exact::{whiten_with_factor, Method};
use crate::kernel::{gram, sample_inputs, KernelParams};
use crate::linalg;
use crate::precond::default_rank;
use crate::rff::rff_sample;
use crate::rng::{self, derive_seed, tag};

pub const SCHEMA_VERSION: u32 = 1;

/// How `fidelity_grid` entries are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityMode {
    /// Grid values are `D` (RFF) or `J` (CIQ) directly.
    #[default]
    Absolute,
    /// Grid values multiply the rescaler of [`rescaler`].
    Fraction,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_eta() -> f64 {
    DEFAULT_ETA
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_alpha() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}

/// Experiment description. Serialized as flat JSON; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub method: Method,
    pub n_list: Vec<usize>,
    pub variance: f64,
    pub lengthscale: f64,
    pub noise_variance: f64,
    pub dim: usize,
    pub fidelity_grid: Vec<f64>,
    #[serde(default)]
    pub fidelity_mode: FidelityMode,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// TV budget used to pick the default `Q` and `δ_Q`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub delta_q: Option<f64>,
    /// Quadrature nodes; defaults to the bound-derived value per `n`.
    #[serde(default)]
    pub quadrature: Option<usize>,
    /// Nyström rank for `pciq`; defaults to `⌊√n⌋`.
    #[serde(default)]
    pub precond_rank: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub repeats: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Run the exact sampler alongside as a reference band.
    #[serde(default = "default_true")]
    pub baseline: bool,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn params(&self) -> KernelParams {
        KernelParams {
            variance: self.variance,
            lengthscale: self.lengthscale,
            noise_variance: self.noise_variance,
            dim: self.dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("{} unsupported (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        self.params().validate()?;
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(invalid("n_list", "must be non-empty with entries >= 1"));
        }
        if self.fidelity_grid.is_empty() {
            return Err(invalid("fidelity_grid", "must be non-empty"));
        }
        for &f in &self.fidelity_grid {
            if !(f > 0.0 && f.is_finite()) {
                return Err(invalid("fidelity_grid", format!("{f} must be positive")));
            }
            if self.fidelity_mode == FidelityMode::Absolute && self.method != Method::Exact {
                if f.fract() != 0.0 {
                    return Err(invalid("fidelity_grid", format!("{f} is not an integer")));
                }
                if self.method == Method::Rff && (f as u64) % 2 != 0 {
                    return Err(invalid("fidelity_grid", format!("D = {f} must be even")));
                }
            }
        }
        if self.repeats == 0 {
            return Err(invalid("repeats", "must be >= 1"));
        }
        critical_value(self.alpha)?;
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(invalid("eta", format!("{} not in (0, 1)", self.eta)));
        }
        if self.quadrature == Some(0) {
            return Err(invalid("quadrature", "must be >= 1"));
        }
        if self.precond_rank == Some(0) {
            return Err(invalid("precond_rank", "must be >= 1"));
        }
        Ok(())
    }

    /// Absolute fidelity value (`D` or `J`) for grid entry `f` at size `n`.
    pub fn resolve_fidelity(&self, n: usize, f: f64) -> usize {
        match (self.fidelity_mode, self.method) {
            (_, Method::Exact) => f.round().max(0.0) as usize,
            (FidelityMode::Absolute, _) => f as usize,
            (FidelityMode::Fraction, Method::Rff) => {
                let d = (f * rescaler(self.method, n)).ceil().max(2.0) as usize;
                d + d % 2
            }
            (FidelityMode::Fraction, _) => (f * rescaler(self.method, n)).ceil().max(1.0) as usize,
        }
    }

    /// Quadrature nodes for size `n`.
    pub fn quadrature_for(&self, n: usize) -> Result<usize> {
        match self.quadrature {
            Some(q) => Ok(q),
            None => {
                let dq = self
                    .delta_q
                    .unwrap_or_else(|| default_delta_q(self.epsilon, self.eta, self.noise_variance));
                ciq_min_quadrature(n, self.eta, self.noise_variance, dq)
            }
        }
    }
}

/// Axis rescaler: `n² log n` for `D`, `√n log n` for CIQ's `J`, and
/// `n^{3/8} log n` for preconditioned CIQ. One for the exact sampler.
pub fn rescaler(method: Method, n: usize) -> f64 {
    let nf = n as f64;
    let ln = nf.ln();
    match method {
        Method::Exact => 1.0,
        Method::Rff => nf * nf * ln,
        Method::Ciq => nf.sqrt() * ln,
        Method::CiqPreconditioned => nf.powf(0.375) * ln,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub n: usize,
    /// Grid entry as configured.
    pub fidelity: f64,
    /// `D` or `J` actually used.
    pub value: usize,
    pub rescaled_fidelity: f64,
    /// Rejections over successful repeats; NaN if every repeat failed.
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub repeats: usize,
    pub rejections: usize,
    pub failures: usize,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCell {
    pub n: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub cells: Vec<ExperimentCell>,
    pub baseline: Vec<BaselineCell>,
}

/// Runs one repeat and reports whether the whitened sample was rejected.
fn run_repeat(config: &ExperimentConfig, method: Method, n: usize, value: usize, seed: u64) -> Result<bool> {
    let params = config.params();
    let x = sample_inputs(n, &params, seed)?;
    let k_xi = gram(&x, &params, params.noise_variance)?;
    let l = linalg::cholesky(&k_xi.entries)?;
    let y = match method {
        Method::Exact => {
            let u = DVector::from_vec(rng::standard_normal_vec(seed, tag::LATENT, n));
            linalg::lower_mul(&l, &u)
        }
        Method::Rff => rff_sample(&x, &params, value, seed)?.y,
        Method::Ciq | Method::CiqPreconditioned => {
            let k_eta = k_xi.with_jitter(config.eta * params.noise_variance);
            let rank = (method == Method::CiqPreconditioned)
                .then(|| config.precond_rank.unwrap_or_else(|| default_rank(n)).min(n));
            let q = config.quadrature_for(n)?;
            ciq_sample_from_gram(&k_eta, &params, config.eta, q, value, seed, rank)?.0.y
        }
    };
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let z = whiten_with_factor(&y, &l)?;
    Ok(cvm_test(z.as_slice(), config.alpha)?.reject)
}

fn summarize(outcomes: &[Result<bool>]) -> (f64, f64, f64, usize, usize) {
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    let rejections = outcomes.iter().filter(|o| matches!(o, Ok(true))).count();
    let ok = outcomes.len() - failures;
    if ok == 0 {
        return (f64::NAN, f64::NAN, f64::NAN, 0, failures);
    }
    let rate = rejections as f64 / ok as f64;
    let (lo, hi) = binomial_ci(rate, ok, 0.95).unwrap_or((f64::NAN, f64::NAN));
    (rate, lo, hi, rejections, failures)
}

/// Runs every `(n, fidelity)` cell plus the exact baseline.
///
/// Repeat `r` of a cell uses seed `derive_seed(base_seed, [n, fidelity, r])`
/// for both the inputs and the sampler, so the report does not depend on
/// scheduling. Failed repeats are counted, not fatal.
pub fn rejection_rate_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &n in &config.n_list {
        for &f in &config.fidelity_grid {
            jobs.push((n, f));
        }
    }
    let cells = jobs
        .iter()
        .map(|&(n, f)| {
            let value = config.resolve_fidelity(n, f);
            let outcomes: Vec<Result<bool>> = (0..config.repeats)
                .into_par_iter()
                .map(|r| {
                    let seed = derive_seed(config.base_seed, &[n as u64, f.to_bits(), r as u64]);
                    run_repeat(config, config.method, n, value, seed)
                })
                .collect();
            let (rate, ci_low, ci_high, rejections, failures) = summarize(&outcomes);
            ExperimentCell {
                n,
                fidelity: f,
                value,
                rescaled_fidelity: value as f64 / rescaler(config.method, n),
                rate,
                ci_low,
                ci_high,
                repeats: config.repeats,
                rejections,
                failures,
                method: config.method,
            }
        })
        .collect();
    let baseline = if config.baseline {
        config
            .n_list
            .iter()
            .map(|&n| {
                let outcomes: Vec<Result<bool>> = (0..config.repeats)
                    .into_par_iter()
                    .map(|r| {
                        let seed = derive_seed(config.base_seed, &[n as u64, tag::REPEAT, r as u64]);
                        run_repeat(config, Method::Exact, n, 0, seed)
                    })
                    .collect();
                let (rate, ci_low, ci_high, _, _) = summarize(&outcomes);
                BaselineCell {
                    n,
                    rate,
                    ci_low,
                    ci_high,
                    repeats: config.repeats,
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(ExperimentReport {
        config: config.clone(),
        cells,
        baseline,
    })
}
