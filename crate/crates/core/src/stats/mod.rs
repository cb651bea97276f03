//! Statistical verification: whitened samples should be i.i.d. standard
//! normal, which the Cramér–von Mises test checks repeat by repeat.

pub mod cvm;
pub mod experiment;

pub use cvm::{binomial_ci, critical_value, cvm_statistic, cvm_test, normal_cdf, CvmResult};
pub use experiment::{
    rejection_rate_experiment, rescaler, BaselineCell, ExperimentCell, ExperimentConfig, ExperimentReport,
    FidelityMode,
};
