//! Cramér–von Mises test against a fully specified standard normal null.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};

/// Asymptotic upper critical values of `W²` for a fully specified null.
pub const CRITICAL_VALUES: [(f64, f64); 3] = [(0.10, 0.347), (0.05, 0.461), (0.01, 0.743)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvmResult {
    pub statistic: f64,
    pub alpha: f64,
    pub critical_value: f64,
    pub reject: bool,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `W² = 1/(12n) + Σ (Φ(z₍ᵢ₎) − (2i − 1)/(2n))²`.
pub fn cvm_statistic(z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(invalid("z", "sample must be non-empty"));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut u: Vec<f64> = z.iter().map(|&v| normal_cdf(v)).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let sum: f64 = u
        .iter()
        .enumerate()
        .map(|(i, &ui)| {
            let d = ui - (2 * i + 1) as f64 / (2.0 * n);
            d * d
        })
        .sum();
    Ok(1.0 / (12.0 * n) + sum)
}

pub fn critical_value(alpha: f64) -> Result<f64> {
    CRITICAL_VALUES
        .iter()
        .find(|(a, _)| (a - alpha).abs() < 1e-12)
        .map(|&(_, c)| c)
        .ok_or_else(|| invalid("alpha", format!("{alpha} not one of 0.10, 0.05, 0.01")))
}

pub fn cvm_test(z: &[f64], alpha: f64) -> Result<CvmResult> {
    let critical_value = critical_value(alpha)?;
    let statistic = cvm_statistic(z)?;
    Ok(CvmResult {
        statistic,
        alpha,
        critical_value,
        reject: statistic > critical_value,
    })
}

/// Normal-approximation interval `rate ± z √(rate(1 − rate)/N)`, clamped to `[0, 1]`.
pub fn binomial_ci(rate: f64, trials: usize, level: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(invalid("rate", format!("{rate} not in [0, 1]")));
    }
    if trials == 0 {
        return Err(invalid("N", "must be >= 1"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid("level", format!("{level} not in (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(1.0 - 0.5 * (1.0 - level));
    let half = z * (rate * (1.0 - rate) / trials as f64).sqrt();
    Ok(((rate - half).max(0.0), (rate + half).min(1.0)))
}
