//! Deterministic, counter-style seeding.
//!
//! Every random quantity is drawn from a ChaCha8 stream whose seed is derived
//! from `(base_seed, stream tag, index)`. Streams never depend on thread count
//! or evaluation order, so batch and streaming code paths reproduce each other
//! bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream tags. Each random quantity gets its own tag.
pub mod tag {
    pub const INPUTS: u64 = 0x5841_5441;
    pub const LATENT: u64 = 0x5541_5445;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const FREQUENCY: u64 = 0x4f4d_4547;
    pub const PROBE: u64 = 0x5052_4f42;
    pub const REPEAT: u64 = 0x5245_5045;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `base` with an order-sensitive hash.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p)))
}

/// Generator for stream `tag`, element `index`, of `seed`.
pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tag, index]))
}

#[inline]
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` i.i.d. standard normals from stream `(seed, tag, 0)`.
pub fn standard_normal_vec(seed: u64, tag: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, tag, 0);
    (0..n).map(|_| standard_normal(&mut rng)).collect()
}
