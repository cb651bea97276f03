//! Random Fourier feature sampler.
//!
//! Frequency `ω_j` and its weight pair `(w_{2j}, w_{2j+1})` come from their
//! own stream `(seed, FREQUENCY, j)`: first the `d` frequency coordinates,
//! then the two weights. The streaming sampler regenerates them on every row
//! from that schedule, so it reproduces the batch sampler bit for bit.

use std::error::Error as StdError;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use crate::bounds::FidelitySpec;
use crate::error::{invalid, Error, Result};
use crate::exact::{GpSample, Method};
use crate::kernel::{InputData, InputStream, KernelParams};
use crate::rng::{self, tag};

/// Spectral frequencies, one row per feature pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMatrix {
    pub omegas: DMatrix<f64>,
    pub seed: u64,
}

impl FrequencyMatrix {
    /// Number of features `D` (twice the number of rows).
    pub fn features(&self) -> usize {
        2 * self.omegas.nrows()
    }

    pub fn dim(&self) -> usize {
        self.omegas.ncols()
    }
}

fn check_features(d: usize) -> Result<()> {
    if d < 2 || d % 2 != 0 {
        return Err(invalid("D", format!("{d} must be even and >= 2")));
    }
    Ok(())
}

fn pair_stream(seed: u64, j: usize) -> ChaCha8Rng {
    rng::stream(seed, tag::FREQUENCY, j as u64)
}

fn draw_frequency(rng: &mut ChaCha8Rng, inv_l: f64, out: &mut [f64]) {
    for w in out.iter_mut() {
        *w = rng::standard_normal(rng) * inv_l;
    }
}

/// `D/2` frequencies `ω_j ~ N(0, I/l²)`.
pub fn sample_frequencies(d_features: usize, params: &KernelParams, seed: u64) -> Result<FrequencyMatrix> {
    check_features(d_features)?;
    params.validate()?;
    let (pairs, dim) = (d_features / 2, params.dim);
    let inv_l = 1.0 / params.lengthscale;
    let mut omegas = DMatrix::zeros(pairs, dim);
    let mut row = vec![0.0; dim];
    for j in 0..pairs {
        draw_frequency(&mut pair_stream(seed, j), inv_l, &mut row);
        for (c, &v) in row.iter().enumerate() {
            omegas[(j, c)] = v;
        }
    }
    Ok(FrequencyMatrix { omegas, seed })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `√(2/D) (sin ω_1ᵀx, cos ω_1ᵀx, …, sin ω_{D/2}ᵀx, cos ω_{D/2}ᵀx)`.
pub fn feature_map(x: &[f64], omega: &FrequencyMatrix) -> Result<DVector<f64>> {
    if x.len() != omega.dim() {
        return Err(Error::DimensionMismatch {
            expected: omega.dim(),
            got: x.len(),
        });
    }
    let scale = (2.0 / omega.features() as f64).sqrt();
    let mut z = DVector::zeros(omega.features());
    let mut row = vec![0.0; omega.dim()];
    for j in 0..omega.omegas.nrows() {
        for (c, r) in row.iter_mut().enumerate() {
            *r = omega.omegas[(j, c)];
        }
        let (s, co) = dot(&row, x).sin_cos();
        z[2 * j] = scale * s;
        z[2 * j + 1] = scale * co;
    }
    Ok(z)
}

/// `n × D` matrix whose rows are [`feature_map`] of the inputs.
pub fn feature_matrix(x: &InputData, omega: &FrequencyMatrix) -> Result<DMatrix<f64>> {
    let mut z = DMatrix::zeros(x.n(), omega.features());
    for i in 0..x.n() {
        let row = feature_map(&x.row(i), omega)?;
        z.set_row(i, &row.transpose());
    }
    Ok(z)
}

struct PairParams {
    omegas: Vec<f64>,
    weights: Vec<f64>,
}

fn draw_pairs(d_features: usize, params: &KernelParams, seed: u64) -> PairParams {
    let (pairs, dim) = (d_features / 2, params.dim);
    let inv_l = 1.0 / params.lengthscale;
    let mut omegas = vec![0.0; pairs * dim];
    let mut weights = vec![0.0; d_features];
    for j in 0..pairs {
        let mut rng = pair_stream(seed, j);
        draw_frequency(&mut rng, inv_l, &mut omegas[j * dim..(j + 1) * dim]);
        weights[2 * j] = rng::standard_normal(&mut rng);
        weights[2 * j + 1] = rng::standard_normal(&mut rng);
    }
    PairParams { omegas, weights }
}

#[inline]
fn pair_term(omega: &[f64], x: &[f64], w0: f64, w1: f64) -> f64 {
    let (s, c) = dot(omega, x).sin_cos();
    w0 * s + w1 * c
}

/// `ŷ = σ_f Z w + σ_ξ ξ` with a fresh frequency matrix drawn from `seed`.
pub fn rff_sample(x: &InputData, params: &KernelParams, d_features: usize, seed: u64) -> Result<GpSample> {
    check_features(d_features)?;
    params.validate()?;
    if x.dim() != params.dim {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            got: x.dim(),
        });
    }
    let n = x.n();
    let dim = params.dim;
    let pp = draw_pairs(d_features, params, seed);
    let scale = (2.0 / d_features as f64).sqrt();
    let sigma_f = params.variance.sqrt();
    let sigma_xi = params.noise_variance.sqrt();
    let mut noise = rng::stream(seed, tag::NOISE, 0);
    let mut f = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let xi = x.row(i);
        let mut acc = 0.0;
        for j in 0..d_features / 2 {
            acc += pair_term(&pp.omegas[j * dim..(j + 1) * dim], &xi, pp.weights[2 * j], pp.weights[2 * j + 1]);
        }
        f[i] = sigma_f * scale * acc;
        y[i] = f[i] + sigma_xi * rng::standard_normal(&mut noise);
    }
    Ok(GpSample {
        y,
        f: Some(f),
        method: Method::Rff,
        params: *params,
        fidelity: FidelitySpec {
            features: Some(d_features),
            ..FidelitySpec::default()
        },
        seed,
    })
}

/// Per-element consumer of a streamed sample.
pub trait SampleSink {
    fn emit(&mut self, index: usize, y: f64) -> std::result::Result<(), Box<dyn StdError + Send + Sync>>;
}

impl<F> SampleSink for F
where
    F: FnMut(usize, f64) -> std::result::Result<(), Box<dyn StdError + Send + Sync>>,
{
    fn emit(&mut self, index: usize, y: f64) -> std::result::Result<(), Box<dyn StdError + Send + Sync>> {
        self(index, y)
    }
}

/// Draws `x_i` and emits `ŷ_i` one row at a time, holding only O(d) state.
///
/// The output equals [`rff_sample`] applied to `sample_inputs(n, params, seed)`.
/// On sink failure the number of values already emitted is reported.
pub fn rff_sample_streaming<S: SampleSink + ?Sized>(
    n: usize,
    params: &KernelParams,
    d_features: usize,
    seed: u64,
    sink: &mut S,
) -> Result<()> {
    check_features(d_features)?;
    params.validate()?;
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let dim = params.dim;
    let inv_l = 1.0 / params.lengthscale;
    let scale = (2.0 / d_features as f64).sqrt();
    let sigma_f = params.variance.sqrt();
    let sigma_xi = params.noise_variance.sqrt();
    let mut inputs = InputStream::new(dim, seed);
    let mut noise = rng::stream(seed, tag::NOISE, 0);
    let mut x = vec![0.0; dim];
    let mut omega = vec![0.0; dim];
    for i in 0..n {
        inputs.next_into(&mut x);
        let mut acc = 0.0;
        for j in 0..d_features / 2 {
            let mut rng = pair_stream(seed, j);
            draw_frequency(&mut rng, inv_l, &mut omega);
            let w0 = rng::standard_normal(&mut rng);
            let w1 = rng::standard_normal(&mut rng);
            acc += pair_term(&omega, &x, w0, w1);
        }
        let y = sigma_f * scale * acc + sigma_xi * rng::standard_normal(&mut noise);
        sink.emit(i, y).map_err(|source| Error::Sink { emitted: i, source })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram, rbf, sample_inputs};

    fn params(l: f64) -> KernelParams {
        KernelParams::new(1.0, l, 0.3, 2).unwrap()
    }

    #[test]
    fn frequencies_shape_and_determinism() {
        let p = params(1.0);
        let a = sample_frequencies(2, &p, 4).unwrap();
        assert_eq!(a.omegas.shape(), (1, 2));
        assert_eq!(a, sample_frequencies(2, &p, 4).unwrap());
        assert_ne!(a, sample_frequencies(2, &p, 5).unwrap());
        assert!(sample_frequencies(3, &p, 4).is_err());
        assert!(sample_frequencies(0, &p, 4).is_err());
    }

    #[test]
    fn frequency_variance_is_inverse_lengthscale_squared() {
        let p = KernelParams::new(1.0, 2.0, 0.3, 1).unwrap();
        let om = sample_frequencies(20_000, &p, 8).unwrap();
        let v: Vec<f64> = om.omegas.iter().copied().collect();
        let m = v.len() as f64;
        let var = v.iter().map(|w| w * w).sum::<f64>() / m;
        // Var of the estimator of σ² for a normal is 2σ⁴/m.
        let se = (2.0 * 0.25f64.powi(2) / m).sqrt();
        assert!((var - 0.25).abs() <= 3.0 * se, "{var}");
    }

    #[test]
    fn feature_map_unit_norm_and_pair_bound() {
        let p = params(0.5);
        let om = sample_frequencies(64, &p, 1).unwrap();
        let x = sample_inputs(10, &p, 2).unwrap();
        for i in 0..10 {
            let zi = feature_map(&x.row(i), &om).unwrap();
            assert!((zi.norm_squared() - 1.0).abs() < 1e-14);
            for k in 0..10 {
                let zk = feature_map(&x.row(k), &om).unwrap();
                for j in 0..32 {
                    let c = zi[2 * j] * zk[2 * j] + zi[2 * j + 1] * zk[2 * j + 1];
                    assert!(c.abs() <= 2.0 / 64.0 + 1e-15);
                }
                assert_eq!(zi.dot(&zk), zk.dot(&zi));
            }
        }
        assert!(feature_map(&[0.0], &om).is_err());
    }

    #[test]
    fn feature_inner_product_is_unbiased() {
        let p = KernelParams::new(1.0, 0.8, 0.3, 2).unwrap();
        let (x, xp) = ([0.3, -0.2], [-0.1, 0.4]);
        let k = rbf(&x, &xp, &p).unwrap();
        let vals: Vec<f64> = (0..200)
            .map(|s| {
                let om = sample_frequencies(16, &p, 1000 + s).unwrap();
                feature_map(&x, &om).unwrap().dot(&feature_map(&xp, &om).unwrap())
            })
            .collect();
        let m = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        assert!((mean - k).abs() <= 4.0 * (var / m).sqrt(), "{mean} vs {k}");
    }

    #[test]
    fn sample_is_deterministic_and_rejects_odd_d() {
        let p = params(1.0);
        let x = sample_inputs(16, &p, 3).unwrap();
        assert_eq!(rff_sample(&x, &p, 32, 7).unwrap(), rff_sample(&x, &p, 32, 7).unwrap());
        assert!(rff_sample(&x, &p, 33, 7).is_err());
    }

    #[test]
    fn latent_matches_feature_matrix_product() {
        let p = KernelParams::new(2.0, 0.6, 0.3, 3).unwrap();
        let x = sample_inputs(12, &p, 3).unwrap();
        let s = rff_sample(&x, &p, 40, 11).unwrap();
        let om = sample_frequencies(40, &p, 11).unwrap();
        let z = feature_matrix(&x, &om).unwrap();
        let mut w = DVector::zeros(40);
        for j in 0..20 {
            let mut r = pair_stream(11, j);
            let mut skip = [0.0; 3];
            draw_frequency(&mut r, 1.0, &mut skip);
            w[2 * j] = rng::standard_normal(&mut r);
            w[2 * j + 1] = rng::standard_normal(&mut r);
        }
        let f = (z * w) * 2f64.sqrt();
        let got = s.f.unwrap();
        assert!((got - f).amax() < 1e-12);
    }

    #[test]
    fn single_point_variance() {
        let p = KernelParams::new(1.0, 1.0, 0.3, 2).unwrap();
        let x = sample_inputs(1, &p, 1).unwrap();
        let ys: Vec<f64> = (0..20_000).map(|s| rff_sample(&x, &p, 8, s).unwrap().y[0]).collect();
        let m = ys.len() as f64;
        let var = ys.iter().map(|y| y * y).sum::<f64>() / m;
        let m4 = ys.iter().map(|y| y.powi(4)).sum::<f64>() / m;
        let se = ((m4 - var * var) / m).sqrt();
        assert!((var - 1.3).abs() <= 4.0 * se, "{var}");
    }

    #[test]
    fn empirical_covariance_within_budget() {
        let p = KernelParams::new(1.0, 0.9, 0.3, 2).unwrap();
        let x = sample_inputs(4, &p, 2).unwrap();
        let k = gram(&x, &p, p.noise_variance).unwrap().entries;
        let reps = 20_000u64;
        let mut acc = DMatrix::<f64>::zeros(4, 4);
        let mut acc2 = DMatrix::<f64>::zeros(4, 4);
        for s in 0..reps {
            let y = rff_sample(&x, &p, 4096, s).unwrap().y;
            let o = &y * y.transpose();
            acc2 += o.component_mul(&o);
            acc += o;
        }
        let r = reps as f64;
        // Frobenius error budget of the kernel approximation, ε' = √8 σ_ξ² ε at ε = 0.1.
        let budget = 8f64.sqrt() * p.noise_variance * 0.1;
        for i in 0..4 {
            for j in 0..4 {
                let mean = acc[(i, j)] / r;
                let se = ((acc2[(i, j)] / r - mean * mean) / r).sqrt();
                assert!((mean - k[(i, j)]).abs() <= 4.0 * se + budget);
            }
        }
    }

    #[test]
    fn streaming_matches_batch() {
        let p = params(0.7);
        let x = sample_inputs(256, &p, 21).unwrap();
        let batch = rff_sample(&x, &p, 128, 21).unwrap().y;
        let mut out = Vec::new();
        let mut sink = |i: usize, y: f64| {
            assert_eq!(i, out.len());
            out.push(y);
            Ok(())
        };
        rff_sample_streaming(256, &p, 128, 21, &mut sink).unwrap();
        assert_eq!(out.as_slice(), batch.as_slice());
    }

    #[test]
    fn streaming_single_value_and_sink_failure() {
        let p = params(1.0);
        let mut count = 0;
        rff_sample_streaming(1, &p, 4, 0, &mut |_: usize, _: f64| {
            count += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(count, 1);
        let err = rff_sample_streaming(10, &p, 4, 0, &mut |i: usize, _: f64| {
            if i == 3 {
                Err("disk full".into())
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::Sink { emitted: 3, .. }));
    }
}
