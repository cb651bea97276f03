//! Sampling from Gaussian process priors with certified total-variation
//! fidelity.
//!
//! Two approximate samplers are provided next to the exact Cholesky baseline:
//! random Fourier features ([`rff`]) and contour-integral quadrature for the
//! matrix square root ([`ciq`]), optionally with a Nyström preconditioner
//! ([`precond`]). [`bounds`] turns a TV budget into fidelity parameters, and
//! [`stats`] checks empirically that whitened samples are standard normal.

pub mod bounds;
pub mod ciq;
pub mod error;
pub mod exact;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod precond;
pub mod rff;
pub mod rng;
pub mod stats;

pub use bounds::{DecayModel, FidelitySpec};
pub use ciq::{QuadratureScheme, SolveReport};
pub use error::{Error, Result};
pub use exact::{GpSample, Method};
pub use kernel::{GramMatrix, InputData, KernelParams};
pub use precond::NystromPreconditioner;
pub use stats::{CvmResult, ExperimentConfig, ExperimentReport};
