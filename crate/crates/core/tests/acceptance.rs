//! End-to-end acceptance checks at desk scale. Each criterion prints one
//! PASS/FAIL line; the process exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use gpforge::bounds::{
    ciq_error_bound, ciq_min_iterations, ciq_min_quadrature, condition_number_bound, decay_regime,
    default_delta_q, kl_frobenius_bound, kl_gaussian_dense, precond_min_iterations, rff_feature_bound,
    rff_min_features, tv_from_kl, DecayModel, Regime, RffBoundForm,
};
use gpforge::ciq::{build_quadrature, ciq_sqrt_mv_with, spectral_envelope, DEFAULT_TOL};
use gpforge::kernel::{gram, sample_inputs, GramMatrix, KernelParams};
use gpforge::precond::{default_rank, effectiveness_sweep, nystrom_factor, preconditioned_condition_bound};
use gpforge::rff::{feature_matrix, sample_frequencies};
use gpforge::rng::{derive_seed, standard_normal_vec, tag};
use gpforge::stats::{binomial_ci, rejection_rate_experiment, ExperimentConfig, ExperimentReport, FidelityMode};
use gpforge::Method;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

const BAND: (f64, f64) = (0.026, 0.076);
const REPEATS: usize = 500;
const NOISE: f64 = 0.25;
const ETA: f64 = 0.5;
const EPSILON: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn in_band(rate: f64) -> bool {
    rate >= BAND.0 && rate <= BAND.1
}

fn config(method: Method, n_list: Vec<usize>, lengthscale: f64, grid: Vec<f64>, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: 1,
        method,
        n_list,
        variance: 1.0,
        lengthscale,
        noise_variance: NOISE,
        dim: 2,
        fidelity_grid: grid,
        fidelity_mode: FidelityMode::Absolute,
        eta: ETA,
        epsilon: EPSILON,
        delta_q: None,
        quadrature: None,
        precond_rank: None,
        alpha: 0.05,
        repeats: REPEATS,
        base_seed: seed,
        baseline: false,
        output: None,
    }
}

fn rates(r: &ExperimentReport) -> String {
    r.cells
        .iter()
        .map(|c| format!("{}:{:.3}", c.value, c.rate))
        .collect::<Vec<_>>()
        .join(" ")
}

fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(a.clone());
    &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt())) * e.eigenvectors.transpose()
}

fn rbf_gram(n: usize, l: f64, jitter: f64, seed: u64) -> GramMatrix {
    let p = KernelParams::new(1.0, l, NOISE, 2).unwrap();
    let x = sample_inputs(n, &p, seed).unwrap();
    gram(&x, &p, jitter).unwrap()
}

fn criterion_1() -> Outcome {
    let r = rejection_rate_experiment(&config(Method::Exact, vec![64, 256, 512], 1.0, vec![1.0], 101)).unwrap();
    let pass = r.cells.iter().all(|c| in_band(c.rate));
    let detail = r.cells.iter().map(|c| format!("n={} rate={:.3}", c.n, c.rate)).collect::<Vec<_>>().join(", ");
    Outcome { pass, detail }
}

fn monotone_within_noise(r: &ExperimentReport) -> bool {
    let cells = &r.cells;
    (0..cells.len()).all(|i| {
        (i + 1..cells.len()).all(|j| {
            let width = (cells[i].ci_high - cells[i].ci_low).max(cells[j].ci_high - cells[j].ci_low);
            cells[j].rate <= cells[i].rate + 2.0 * width
        })
    })
}

fn criterion_2() -> Outcome {
    let grid = vec![16.0, 64.0, 256.0, 1024.0, 4096.0];
    let mut pass = true;
    let mut detail = Vec::new();
    for l in [0.1, 1.0] {
        let r = rejection_rate_experiment(&config(Method::Rff, vec![256], l, grid.clone(), 202)).unwrap();
        let first = r.cells.first().unwrap().rate;
        let last = r.cells.last().unwrap().rate;
        let ok = first >= 0.5 && in_band(last) && monotone_within_noise(&r);
        pass &= ok;
        detail.push(format!("l={l} [{}]", rates(&r)));
    }
    Outcome { pass, detail: detail.join("; ") }
}

fn criterion_3() -> Outcome {
    let n = 256;
    let dq = default_delta_q(EPSILON, ETA, NOISE);
    let q = ciq_min_quadrature(n, ETA, NOISE, dq).unwrap();
    let j_bound = ciq_min_iterations(n, ETA, NOISE, EPSILON, dq, q).unwrap();
    let grid: Vec<f64> = [1, 2, 4, 8, 16, 32, 64].iter().map(|&j| j as f64).collect();
    let mut pass = true;
    let mut detail = vec![format!("Q={q} J_bound={j_bound}")];
    for l in [0.1, 1.0] {
        let r = rejection_rate_experiment(&config(Method::Ciq, vec![n], l, grid.clone(), 303)).unwrap();
        let reached = r.cells.iter().find(|c| in_band(c.rate) && c.value <= j_bound).map(|c| c.value);
        pass &= reached.is_some();
        detail.push(format!("l={l} first in band at J={reached:?} [{}]", rates(&r)));
    }
    Outcome { pass, detail: detail.join("; ") }
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2] as f64
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2]) as f64
    }
}

fn criterion_4() -> Outcome {
    let n = 1024;
    let jitter = ETA * NOISE;
    let dq = default_delta_q(EPSILON, ETA, NOISE);
    let q = ciq_min_quadrature(n, ETA, NOISE, dq).unwrap();
    let mut plain = Vec::new();
    let mut pre = Vec::new();
    for s in 0..20u64 {
        let k = rbf_gram(n, 1.0, jitter, derive_seed(404, &[s]));
        let (lo, hi) = spectral_envelope(&k).unwrap();
        let scheme = build_quadrature(lo, hi, q).unwrap();
        let u = DVector::from_vec(standard_normal_vec(s, tag::LATENT, n));
        let (_, r0) = ciq_sqrt_mv_with(&k, &u, &scheme, 2000, 1e-8, None).unwrap();
        let p = nystrom_factor(&k, default_rank(n)).unwrap();
        let (_, r1) = ciq_sqrt_mv_with(&k, &u, &scheme, 2000, 1e-8, Some(&p)).unwrap();
        plain.push(r0.iterations_run);
        pre.push(r1.iterations_run);
    }
    let (m0, m1) = (median(plain), median(pre));

    let params = KernelParams::new(1.0, 1.0, 0.001, 2).unwrap();
    let ls = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];
    let rows = effectiveness_sweep(&[2000], &ls, &params, ETA, default_rank, 405).unwrap();
    let peak = rows.iter().max_by(|a, b| a.metric.total_cmp(&b.metric)).unwrap();
    let pass = m1 <= m0 && (0.03..=0.5).contains(&peak.lengthscale);
    Outcome {
        pass,
        detail: format!(
            "median iterations plain={m0} preconditioned={m1}; sweep peak at l={} (metric {:.3e})",
            peak.lengthscale, peak.metric
        ),
    }
}

fn criterion_5() -> Outcome {
    let mut violations = 0;
    let mut checks = 0;
    let mut worst: f64 = 0.0;
    for (idx, &n) in [16usize, 64, 256].iter().enumerate() {
        for l in [0.3, 1.0] {
            let k = rbf_gram(n, l, ETA * NOISE, derive_seed(505, &[idx as u64, l.to_bits()]));
            let eig = SymmetricEigen::new(k.entries.clone()).eigenvalues;
            let (lmin, lmax) = (eig.min(), eig.max());
            let kappa = lmax / lmin;
            let root = sym_sqrt(&k.entries);
            let u = DVector::from_vec(standard_normal_vec(n as u64, tag::PROBE, n));
            let exact = &root * &u;
            let (lo, hi) = spectral_envelope(&k).unwrap();
            for q in [1, 2, 4, 8, 16] {
                let scheme = build_quadrature(lo, hi, q).unwrap();
                for j in [1, 2, 4, 8, 16, 32, 64] {
                    let (f, _) = ciq_sqrt_mv_with(&k, &u, &scheme, j, DEFAULT_TOL, None).unwrap();
                    let err = (&f - &exact).norm();
                    let bound = ciq_error_bound(q, j, kappa, lmin, u.norm()).total;
                    checks += 1;
                    worst = worst.max(err / bound);
                    if err > bound {
                        violations += 1;
                    }
                }
            }
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("{violations} violations in {checks} (Q, J, n, l) checks; worst error/bound = {worst:.3e}"),
    }
}

fn gaussian_tv(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let pdf = |x: f64, m: f64, v: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
    let span = 14.0 * v1.max(v2).sqrt() + (m1 - m2).abs();
    let (a, b) = (m1.min(m2) - span, m1.max(m2) + span);
    let steps = 200_000;
    let h = (b - a) / steps as f64;
    // Composite Simpson on |p − q|.
    let f = |x: f64| (pdf(x, m1, v1) - pdf(x, m2, v2)).abs();
    let mut s = f(a) + f(b);
    for i in 1..steps {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    0.5 * s * h / 3.0
}

fn gaussian_kl(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    0.5 * ((v2 / v1).ln() + (v1 + (m1 - m2).powi(2)) / v2 - 1.0)
}

fn criterion_6() -> Outcome {
    let mut fails = Vec::new();

    // Pinsker on a 20-point grid of 1-D Gaussian pairs.
    let mut pinsker_bad = 0;
    for &dm in &[0.0, 0.3, 1.0, 2.5] {
        for &v in &[0.25, 0.8, 1.0, 1.5, 4.0] {
            let tv = gaussian_tv(0.0, 1.0, dm, v);
            let bound = tv_from_kl(gaussian_kl(0.0, 1.0, dm, v)).unwrap();
            if !(tv <= bound + 1e-9 && (0.0..=1.0).contains(&tv) && (0.0..=1.0).contains(&bound)) {
                pinsker_bad += 1;
            }
        }
    }
    if pinsker_bad > 0 {
        fails.push(format!("pinsker {pinsker_bad}/20"));
    }

    // KL(N(0, K + E) ‖ N(0, K)) ≤ ‖E‖²_F / 4σ⁴ on n = 16.
    let mut frob_bad = 0;
    for t in 0..100u64 {
        let n = 16;
        let sigma2 = [0.05, 0.25, 1.0][t as usize % 3];
        let k = rbf_gram(n, 0.2 + 0.02 * t as f64, sigma2, derive_seed(606, &[t]));
        let g = standard_normal_vec(t, tag::PROBE, n * n);
        let mut e = DMatrix::from_row_slice(n, n, &g);
        e = (&e + e.transpose()) * 0.5;
        let scale = 0.3 * sigma2 / e.norm() * (1.0 + (t % 5) as f64) / 5.0;
        e *= scale;
        let k_hat = &k.entries + &e;
        let kl = kl_gaussian_dense(&k_hat, &k.entries).unwrap();
        if kl > kl_frobenius_bound(e.norm(), sigma2) {
            frob_bad += 1;
        }
    }
    if frob_bad > 0 {
        fails.push(format!("kl_frob {frob_bad}/100"));
    }

    // Dense κ(K_ηξ) ≤ n σ_f² / (ησ²) + 1.
    let mut cond_bad = 0;
    for t in 0..50u64 {
        let n = [16, 32, 64, 128, 200][t as usize % 5];
        let l = 0.05 + 0.1 * t as f64;
        let sigma2 = [0.001, 0.01, 0.25][t as usize % 3];
        let sf2 = [0.5, 1.0, 2.0][t as usize % 3];
        let p = KernelParams::new(sf2, l, sigma2, 2).unwrap();
        let x = sample_inputs(n, &p, derive_seed(607, &[t])).unwrap();
        let k = gram(&x, &p, ETA * sigma2).unwrap();
        let eig = SymmetricEigen::new(k.entries).eigenvalues;
        if eig.max() / eig.min() > condition_number_bound(n, ETA, sigma2, sf2) * (1.0 + 1e-9) {
            cond_bad += 1;
        }
    }
    if cond_bad > 0 {
        fails.push(format!("condition {cond_bad}/50"));
    }

    // κ((K̃ + ησ²I)⁻¹(K + ησ²I)) ≤ 1 + 2λ_{k+1}√(4k(n−k)+1)/(ησ²), k = ⌊√n⌋.
    let mut pc_bad = 0;
    let mut pc_worst: f64 = 0.0;
    for t in 0..50u64 {
        let n = [32, 64, 128, 256, 512][t as usize % 5];
        let l = [0.05, 0.1, 0.3, 1.0, 3.0][(t as usize / 5) % 5];
        let sigma2 = [0.001, 0.25][(t as usize / 25) % 2];
        let k = rbf_gram(n, l, ETA * sigma2, derive_seed(608, &[t]));
        let kk = default_rank(n);
        let lam = SymmetricEigen::new(k.without_jitter()).eigenvalues;
        let mut sorted: Vec<f64> = lam.iter().copied().collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let lambda_kp1 = sorted[kk].max(0.0);
        let p = nystrom_factor(&k, kk).unwrap();
        let mut m = &p.factor * p.factor.transpose();
        for i in 0..n {
            m[(i, i)] += p.noise;
        }
        let me = SymmetricEigen::new(m);
        let inv_sqrt = &me.eigenvectors
            * DMatrix::from_diagonal(&me.eigenvalues.map(|v| 1.0 / v.sqrt()))
            * me.eigenvectors.transpose();
        let s = &inv_sqrt * &k.entries * &inv_sqrt;
        let ev = SymmetricEigen::new(s).eigenvalues;
        let kappa = ev.max() / ev.min();
        let bound = preconditioned_condition_bound(lambda_kp1, n, ETA, sigma2, kk);
        pc_worst = pc_worst.max(kappa / bound);
        if kappa > bound * (1.0 + 1e-9) {
            pc_bad += 1;
        }
    }
    if pc_bad > 0 {
        fails.push(format!("preconditioned condition {pc_bad}/50"));
    }
    Outcome {
        pass: fails.is_empty(),
        detail: if fails.is_empty() {
            format!("all 220 checks hold; worst preconditioned κ/bound = {pc_worst:.3}")
        } else {
            format!("violations: {}", fails.join(", "))
        },
    }
}

fn criterion_7() -> Outcome {
    let mut bad = Vec::new();
    let raw = rff_feature_bound(RffBoundForm::Printed, 100, 0.1, 0.01, 1.0).unwrap();
    let d = rff_min_features(100, 0.1, 0.01, 1.0).unwrap();
    if !((raw - 1000f64.ln() * 1e6).abs() < 1e-6 * raw && (raw - 6.908e6).abs() < 1e3 && d % 2 == 0 && (d as f64) - raw < 2.0) {
        bad.push(format!("D={d}"));
    }
    let q = ciq_min_quadrature(1000, 0.5, 0.1, 1e-3).unwrap();
    if q != 5 {
        bad.push(format!("Q={q}"));
    }
    let j = precond_min_iterations(1e-3, 256, 0.5, 0.25, 0.2, 0.02, 0.0).unwrap();
    if j != 9 {
        bad.push(format!("J={j}"));
    }
    let r1 = decay_regime(100, &DecayModel::new(1.0, 1.0, 1.0, 2).unwrap());
    let r2 = decay_regime(100, &DecayModel::new(1.0, 1.0, 1.0, 4).unwrap());
    if r1.regime != Regime::III || (r1.gamma + 0.9705).abs() > 1e-3 {
        bad.push(format!("regime(d=2)={:?}", r1.regime));
    }
    if r2.regime != Regime::I || (r2.gamma - 2.448).abs() > 1e-3 {
        bad.push(format!("regime(d=4)={:?}", r2.regime));
    }
    Outcome {
        pass: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("D={d}, Q={q}, J={j}, regimes iii (γ={:.4}) and i (γ={:.4})", r1.gamma, r2.gamma)
        } else {
            format!("mismatch: {}", bad.join(", "))
        },
    }
}

fn criterion_8() -> Outcome {
    let (n, delta, sigma2) = (16usize, 0.1, 1.0);
    // Choose ε so that the feature bound sits at D ≈ 5000.
    let base = rff_feature_bound(RffBoundForm::Printed, n, 1.0, delta, sigma2).unwrap();
    let epsilon = (base / 5000.0).sqrt();
    let d = rff_min_features(n, epsilon, delta, sigma2).unwrap();
    let budget = 8f64.sqrt() * sigma2 * epsilon / n as f64;
    let params = KernelParams::new(1.0, 0.5, sigma2, 2).unwrap();
    let trials = 500;
    let mut hits = 0;
    for t in 0..trials as u64 {
        let x = sample_inputs(n, &params, derive_seed(808, &[t])).unwrap();
        let k = gram(&x, &params, 0.0).unwrap().entries;
        let om = sample_frequencies(d, &params, derive_seed(809, &[t])).unwrap();
        let z = feature_matrix(&x, &om).unwrap();
        let err = (&z * z.transpose() - k).amax();
        if err < budget {
            hits += 1;
        }
    }
    let frac = hits as f64 / trials as f64;
    let (_, hi) = binomial_ci(frac, trials, 0.95).unwrap();
    Outcome {
        pass: frac >= 1.0 - delta || hi >= 1.0 - delta,
        detail: format!("D={d}, eps={epsilon:.4}, per-element budget={budget:.4e}, fraction within budget={frac:.3}"),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 null calibration", criterion_1),
        ("2 RFF convergence", criterion_2),
        ("3 CIQ convergence", criterion_3),
        ("4 preconditioning benefit", criterion_4),
        ("5 CIQ error-bound dominance", criterion_5),
        ("6 divergence inequalities", criterion_6),
        ("7 bound-calculator regression", criterion_7),
        ("8 RFF element-wise guarantee", criterion_8),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let out = run();
        let status = if out.pass { "PASS" } else { "FAIL" };
        println!("[{status}] criterion {name} ({:.1}s): {}", t.elapsed().as_secs_f64(), out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
