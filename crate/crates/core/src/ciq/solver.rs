//! Solves `(σ_q I + A) v_q = u` for several shifts at once.
//!
//! Without a preconditioner, every shifted system shares the Krylov space of
//! `A` (it is shift invariant), so one Lanczos recurrence drives a MINRES
//! update per shift and the cost is one product with `A` per iteration. A
//! preconditioner breaks shift invariance; each shift then runs its own
//! preconditioned CG with `(F Fᵀ + (noise + σ_q) I)⁻¹`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::SymmetricOperator;
use crate::precond::NystromPreconditioner;

pub const DEFAULT_TOL: f64 = 1e-10;

const BREAKDOWN_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations_run: usize,
    /// Final `‖u − (σ_q I + A) v_q‖ / ‖u‖` per shift.
    pub residual_norms: Vec<f64>,
    pub converged: Vec<bool>,
    /// The Lanczos recurrence hit an invariant subspace.
    pub breakdown: bool,
    /// Relative residual per shift after each iteration.
    pub history: Vec<Vec<f64>>,
}

impl SolveReport {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_norms.iter().copied().fold(0.0, f64::max)
    }
}

struct ShiftState {
    shift: f64,
    c1: f64,
    s1: f64,
    c2: f64,
    s2: f64,
    phibar: f64,
    d1: DVector<f64>,
    d2: DVector<f64>,
    x: DVector<f64>,
    done: bool,
}

/// Approximate `v_q = (σ_q I + A)⁻¹ u` for every shift, stopping after
/// `max_iter` iterations or once every relative residual is at most `tol`.
pub fn shifted_solve<A: SymmetricOperator + ?Sized>(
    op: &A,
    shifts: &[f64],
    u: &DVector<f64>,
    max_iter: usize,
    tol: f64,
    precond: Option<&NystromPreconditioner>,
) -> Result<(Vec<DVector<f64>>, SolveReport)> {
    let n = op.dim();
    if u.len() != n {
        return Err(crate::error::Error::DimensionMismatch { expected: n, got: u.len() });
    }
    if max_iter == 0 {
        return Err(invalid("J", "must be >= 1"));
    }
    if shifts.is_empty() {
        return Err(invalid("shifts", "at least one shift is required"));
    }
    let norm_u = u.norm();
    if norm_u == 0.0 {
        let q = shifts.len();
        return Ok((
            vec![DVector::zeros(n); q],
            SolveReport {
                iterations_run: 0,
                residual_norms: vec![0.0; q],
                converged: vec![true; q],
                breakdown: false,
                history: Vec::new(),
            },
        ));
    }
    match precond {
        None => Ok(minres_multishift(op, shifts, u, norm_u, max_iter, tol)),
        Some(p) => {
            if p.n() != n {
                return Err(crate::error::Error::DimensionMismatch { expected: n, got: p.n() });
            }
            pcg_per_shift(op, shifts, u, norm_u, max_iter, tol, p)
        }
    }
}

fn minres_multishift<A: SymmetricOperator + ?Sized>(
    op: &A,
    shifts: &[f64],
    u: &DVector<f64>,
    beta1: f64,
    max_iter: usize,
    tol: f64,
) -> (Vec<DVector<f64>>, SolveReport) {
    let n = op.dim();
    let mut states: Vec<ShiftState> = shifts
        .iter()
        .map(|&shift| ShiftState {
            shift,
            c1: 1.0,
            s1: 0.0,
            c2: 1.0,
            s2: 0.0,
            phibar: beta1,
            d1: DVector::zeros(n),
            d2: DVector::zeros(n),
            x: DVector::zeros(n),
            done: false,
        })
        .collect();

    let mut v_old = DVector::zeros(n);
    let mut v = u / beta1;
    let mut w = DVector::zeros(n);
    let mut beta = 0.0;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut breakdown = false;

    for _ in 0..max_iter {
        op.apply(&v, &mut w);
        w.axpy(-beta, &v_old, 1.0);
        let alpha = v.dot(&w);
        w.axpy(-alpha, &v, 1.0);
        let beta_new = w.norm();

        for st in states.iter_mut().filter(|s| !s.done) {
            let alpha_s = alpha + st.shift;
            let eps = st.s2 * beta;
            let beta_hat = st.c2 * beta;
            let delta = st.c1 * beta_hat + st.s1 * alpha_s;
            let gamma_bar = -st.s1 * beta_hat + st.c1 * alpha_s;
            let gamma = gamma_bar.hypot(beta_new);
            let (c, s) = (gamma_bar / gamma, beta_new / gamma);
            let phi = c * st.phibar;
            st.phibar = -s * st.phibar;

            // d_new = (v − ε d₂ − δ d₁) / γ, written into d₂'s storage.
            st.d2.scale_mut(-eps);
            st.d2.axpy(-delta, &st.d1, 1.0);
            st.d2 += &v;
            st.d2 /= gamma;
            std::mem::swap(&mut st.d1, &mut st.d2);
            st.x.axpy(phi, &st.d1, 1.0);

            st.c2 = st.c1;
            st.s2 = st.s1;
            st.c1 = c;
            st.s1 = s;
            if st.phibar.abs() / beta1 <= tol {
                st.done = true;
            }
        }
        iterations += 1;
        history.push(states.iter().map(|s| s.phibar.abs() / beta1).collect());

        if states.iter().all(|s| s.done) {
            break;
        }
        if beta_new <= BREAKDOWN_TOL * (alpha.abs() + beta) {
            breakdown = true;
            break;
        }
        std::mem::swap(&mut v_old, &mut v);
        v.copy_from(&w);
        v /= beta_new;
        beta = beta_new;
    }

    let residual_norms: Vec<f64> = states.iter().map(|s| s.phibar.abs() / beta1).collect();
    let converged = residual_norms.iter().map(|&r| r <= tol).collect();
    let report = SolveReport {
        iterations_run: iterations,
        residual_norms,
        converged,
        breakdown,
        history,
    };
    (states.into_iter().map(|s| s.x).collect(), report)
}

fn pcg_per_shift<A: SymmetricOperator + ?Sized>(
    op: &A,
    shifts: &[f64],
    u: &DVector<f64>,
    norm_u: f64,
    max_iter: usize,
    tol: f64,
    precond: &NystromPreconditioner,
) -> Result<(Vec<DVector<f64>>, SolveReport)> {
    let n = op.dim();
    let mut solutions = Vec::with_capacity(shifts.len());
    let mut per_shift_history: Vec<Vec<f64>> = Vec::with_capacity(shifts.len());
    let mut residual_norms = Vec::with_capacity(shifts.len());
    let mut q = DVector::zeros(n);
    for &shift in shifts {
        let m_inv = precond.shifted(shift)?;
        let mut x = DVector::zeros(n);
        let mut r = u.clone();
        let mut z = m_inv.apply(&r);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        let mut hist = Vec::new();
        let mut res = 1.0;
        for _ in 0..max_iter {
            op.apply(&p, &mut q);
            q.axpy(shift, &p, 1.0);
            let pq = p.dot(&q);
            if !(pq > 0.0) {
                break;
            }
            let a = rz / pq;
            x.axpy(a, &p, 1.0);
            r.axpy(-a, &q, 1.0);
            res = r.norm() / norm_u;
            hist.push(res);
            if res <= tol {
                break;
            }
            z = m_inv.apply(&r);
            let rz_new = r.dot(&z);
            p.axpy(1.0, &z, rz_new / rz);
            rz = rz_new;
        }
        residual_norms.push(res);
        per_shift_history.push(hist);
        solutions.push(x);
    }
    let iterations_run = per_shift_history.iter().map(Vec::len).max().unwrap_or(0);
    let history = (0..iterations_run)
        .map(|it| {
            per_shift_history
                .iter()
                .map(|h| h.get(it).or(h.last()).copied().unwrap_or(1.0))
                .collect()
        })
        .collect();
    let converged = residual_norms.iter().map(|&r| r <= tol).collect();
    Ok((
        solutions,
        SolveReport {
            iterations_run,
            residual_norms,
            converged,
            breakdown: false,
            history,
        },
    ))
}
