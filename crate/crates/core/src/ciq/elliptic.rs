//! Complete elliptic integral of the first kind and Jacobi elliptic functions
//! by the arithmetic-geometric mean.
//!
//! The internal entry points take the complementary modulus `k' = √(1 − k²)`
//! directly; near `k = 1` it carries all the information and forming it from
//! `k` would cancel.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

const MAX_AGM_STEPS: usize = 40;

fn check_modulus(k: f64) -> Result<()> {
    if (0.0..1.0).contains(&k) {
        Ok(())
    } else {
        Err(Error::Domain(format!("elliptic modulus k = {k} not in [0, 1)")))
    }
}

fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..MAX_AGM_STEPS {
        if (a - b).abs() <= f64::EPSILON * a {
            break;
        }
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
    }
    a
}

/// `K(k)` for modulus `k ∈ [0, 1)`.
pub fn elliptic_k(k: f64) -> Result<f64> {
    check_modulus(k)?;
    Ok(elliptic_k_complement((1.0 - k * k).sqrt()))
}

/// `K(k)` given `k' ∈ (0, 1]`.
pub(crate) fn elliptic_k_complement(kp: f64) -> f64 {
    FRAC_PI_2 / agm(1.0, kp)
}

/// `(cn(t, k), dn(t, k))`.
pub fn jacobi_cn_dn(t: f64, k: f64) -> Result<(f64, f64)> {
    let (_, cn, dn) = jacobi_sn_cn_dn(t, k)?;
    Ok((cn, dn))
}

/// `(sn, cn, dn)` at `(t, k)`.
pub fn jacobi_sn_cn_dn(t: f64, k: f64) -> Result<(f64, f64, f64)> {
    check_modulus(k)?;
    Ok(sn_cn_dn_complement(t, (1.0 - k * k).sqrt()))
}

/// Descending Landen transformation. `kp` is the complementary modulus.
pub(crate) fn sn_cn_dn_complement(u: f64, kp: f64) -> (f64, f64, f64) {
    let mut a = [0.0; MAX_AGM_STEPS + 1];
    let mut c = [0.0; MAX_AGM_STEPS + 1];
    a[0] = 1.0;
    c[0] = ((1.0 - kp) * (1.0 + kp)).sqrt();
    let mut b = kp;
    let mut levels = 0;
    while levels < MAX_AGM_STEPS && c[levels].abs() > f64::EPSILON * a[levels] {
        let (an, bn) = (a[levels], b);
        a[levels + 1] = 0.5 * (an + bn);
        c[levels + 1] = 0.5 * (an - bn);
        b = (an * bn).sqrt();
        levels += 1;
    }
    let mut phi = f64::powi(2.0, levels as i32) * a[levels] * u;
    for i in (1..=levels).rev() {
        phi = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
    }
    let (sn, cn) = phi.sin_cos();
    let dn = (cn * cn + kp * kp * sn * sn).sqrt();
    (sn, cn, dn)
}
