//! Isotropic RBF kernel, input generation and Gram assembly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, tag};

/// GP hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Kernel scale σ_f².
    pub variance: f64,
    pub lengthscale: f64,
    /// Observation noise σ_ξ².
    pub noise_variance: f64,
    pub dim: usize,
}

impl KernelParams {
    pub fn new(variance: f64, lengthscale: f64, noise_variance: f64, dim: usize) -> Result<Self> {
        let p = Self {
            variance,
            lengthscale,
            noise_variance,
            dim,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0) || !self.variance.is_finite() {
            return Err(invalid("variance", format!("{} must be >= 0", self.variance)));
        }
        if !(self.lengthscale > 0.0) {
            return Err(invalid("lengthscale", format!("{} must be > 0", self.lengthscale)));
        }
        if !(self.noise_variance > 0.0) || !self.noise_variance.is_finite() {
            return Err(invalid(
                "noise_variance",
                format!("{} must be > 0", self.noise_variance),
            ));
        }
        if self.dim == 0 {
            return Err(invalid("dim", "must be >= 1"));
        }
        Ok(())
    }

    pub fn with_lengthscale(mut self, lengthscale: f64) -> Self {
        self.lengthscale = lengthscale;
        self
    }
}

/// Input locations, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct InputData {
    pub points: DMatrix<f64>,
    /// Seed the points were drawn with, if they were generated here.
    pub seed: Option<u64>,
}

impl InputData {
    pub fn from_points(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(invalid("points", "need at least one row and one column"));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { points, seed: None })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }
}

/// `σ_f² exp(-‖x - x'‖² / (2 l²))`.
pub fn rbf(x: &[f64], y: &[f64], params: &KernelParams) -> Result<f64> {
    for v in [x, y] {
        if v.len() != params.dim {
            return Err(Error::DimensionMismatch {
                expected: params.dim,
                got: v.len(),
            });
        }
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(params.variance * (-d2 / (2.0 * params.lengthscale * params.lengthscale)).exp())
}

/// Draws `n` points with i.i.d. `Normal(0, 1/d)` coordinates.
///
/// Coordinates are consumed row by row from a single stream, so a sequential
/// consumer can regenerate row `i` after rows `0..i`.
pub fn sample_inputs(n: usize, params: &KernelParams, seed: u64) -> Result<InputData> {
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let d = params.dim;
    let mut gen = InputStream::new(d, seed);
    let mut points = DMatrix::zeros(n, d);
    let mut row = vec![0.0; d];
    for i in 0..n {
        gen.next_into(&mut row);
        for (c, v) in row.iter().enumerate() {
            points[(i, c)] = *v;
        }
    }
    Ok(InputData {
        points,
        seed: Some(seed),
    })
}

/// Sequential generator of input rows, shared by [`sample_inputs`] and the
/// streaming RFF sampler.
pub(crate) struct InputStream {
    rng: rand_chacha::ChaCha8Rng,
    scale: f64,
}

impl InputStream {
    pub(crate) fn new(dim: usize, seed: u64) -> Self {
        Self {
            rng: rng::stream(seed, tag::INPUTS, 0),
            scale: (1.0 / dim as f64).sqrt(),
        }
    }

    pub(crate) fn next_into(&mut self, row: &mut [f64]) {
        for v in row.iter_mut() {
            *v = self.scale * rng::standard_normal(&mut self.rng);
        }
    }
}

/// Dense Gram matrix with a known diagonal jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    /// Added diagonal, e.g. ησ_ξ² or σ_ξ².
    pub jitter: f64,
    /// Kernel scale σ_f² the entries were built with.
    pub variance: f64,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Entries with the jitter removed from the diagonal.
    pub fn without_jitter(&self) -> DMatrix<f64> {
        let mut k = self.entries.clone();
        for i in 0..k.nrows() {
            k[(i, i)] -= self.jitter;
        }
        k
    }

    /// Same kernel, different diagonal jitter.
    pub fn with_jitter(&self, jitter: f64) -> GramMatrix {
        let mut entries = self.entries.clone();
        for i in 0..entries.nrows() {
            entries[(i, i)] += jitter - self.jitter;
        }
        GramMatrix {
            entries,
            jitter,
            variance: self.variance,
        }
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

/// `K_ij = rbf(x_i, x_j) + jitter δ_ij`.
///
/// Squared distances use `‖x‖² + ‖x'‖² - 2 xᵀx'`, clamped at zero. The
/// diagonal is written as `variance + jitter` directly.
pub fn gram(x: &InputData, params: &KernelParams, jitter: f64) -> Result<GramMatrix> {
    if !(jitter >= 0.0) {
        return Err(invalid("jitter", format!("{jitter} must be >= 0")));
    }
    if x.dim() != params.dim {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            got: x.dim(),
        });
    }
    let n = x.n();
    let pts = &x.points;
    let inner = pts * pts.transpose();
    let norms: DVector<f64> = inner.diagonal();
    let scale = -1.0 / (2.0 * params.lengthscale * params.lengthscale);
    let mut entries = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let d2 = (norms[i] + norms[j] - 2.0 * inner[(i, j)]).max(0.0);
            let k = params.variance * (d2 * scale).exp();
            entries[(i, j)] = k;
            entries[(j, i)] = k;
        }
        entries[(j, j)] = params.variance + jitter;
    }
    Ok(GramMatrix {
        entries,
        jitter,
        variance: params.variance,
    })
}
