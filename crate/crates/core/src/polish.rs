//! Gauss-Newton refinement of the phases of a verified assignment.
//!
//! The recursion determines each pair from a single row, so rounding in the
//! upper rows is amplified on the way down. Once a branch path reproduces
//! every row, a few Gauss-Newton steps against all rows recover the digits.
//! Jacobian products are formed directly from the layout, `O(S^2)` each, and
//! every linear step is solved by CGLS.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::selector::Layout;

/// Upper bound on Gauss-Newton steps.
pub const POLISH_STEPS: usize = 4;
/// Upper bound on CGLS iterations per step.
pub const POLISH_INNER: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolishStats {
    pub steps: usize,
    pub residual_before: f64,
    pub residual_after: f64,
}

/// `out[lag(p, q)] += x_p conj(y_q)` over all pairs.
fn cross<L: Layout>(layout: &L, x: &[Complex64], y: &[Complex64], out: &mut [Complex64]) {
    for (p, xp) in x.iter().enumerate() {
        if *xp == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (q, yq) in y.iter().enumerate() {
            out[layout.lag_of(p, q)] += xp * yq.conj();
        }
    }
}

/// `J v`: change of the autocorrelation for phase increments `v`.
fn jacobian<L: Layout>(layout: &L, a: &[Complex64], v: &[f64]) -> Vec<Complex64> {
    let u: Vec<Complex64> = a
        .iter()
        .zip(v)
        .map(|(ak, vk)| Complex64::new(0.0, *vk) * ak)
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); layout.lag_count()];
    cross(layout, &u, a, &mut out);
    cross(layout, a, &u, &mut out);
    out
}

/// `J^T r` for the real least-squares problem in the phases.
fn jacobian_t<L: Layout>(layout: &L, a: &[Complex64], r: &[Complex64]) -> Vec<f64> {
    let n = a.len();
    let mut g = vec![0.0; n];
    for k in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for q in 0..n {
            // d c[lag(k, q)] / d phi_k = i a_k conj(a_q)
            acc += r[layout.lag_of(k, q)].conj() * Complex64::i() * a[k] * a[q].conj();
            // d c[lag(q, k)] / d phi_k = -i a_q conj(a_k)
            acc -= r[layout.lag_of(q, k)].conj() * Complex64::i() * a[q] * a[k].conj();
        }
        g[k] = acc.re;
    }
    g
}

fn residual<L: Layout>(layout: &L, a: &[Complex64], target: &[Complex64]) -> (Vec<Complex64>, f64) {
    let r: Vec<Complex64> = layout
        .autocorr(a)
        .iter()
        .zip(target)
        .map(|(c, b)| c - b)
        .collect();
    let norm = r.iter().map(|x| x.norm_sqr()).sum();
    (r, norm)
}

/// Least-squares `min |J d + r|` over the free phases by CGLS.
fn cgls<L: Layout>(layout: &L, a: &[Complex64], r: &[Complex64], fixed: usize) -> Vec<f64> {
    let n = a.len();
    let mut d = vec![0.0; n];
    // Residual of the linear problem, s = -r - J d.
    let mut s: Vec<Complex64> = r.iter().map(|x| -x).collect();
    let mut g = jacobian_t(layout, a, &s);
    g[fixed] = 0.0;
    let mut p = g.clone();
    let mut gamma: f64 = g.iter().map(|x| x * x).sum();
    let start = gamma;
    for _ in 0..POLISH_INNER {
        if !(gamma > 1e-30 * start) {
            break;
        }
        let q = jacobian(layout, a, &p);
        let qq: f64 = q.iter().map(|x| x.norm_sqr()).sum();
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        if !alpha.is_finite() {
            break;
        }
        for (dk, pk) in d.iter_mut().zip(&p) {
            *dk += alpha * pk;
        }
        for (sk, qk) in s.iter_mut().zip(&q) {
            *sk -= alpha * qk;
        }
        g = jacobian_t(layout, a, &s);
        g[fixed] = 0.0;
        let next: f64 = g.iter().map(|x| x * x).sum();
        let beta = next / gamma;
        gamma = next;
        for (pk, gk) in p.iter_mut().zip(&g) {
            *pk = gk + beta * *pk;
        }
    }
    d
}

/// Refines `phases` in place, keeping slot `fixed` (the gauge) unchanged.
/// Steps are only kept when they lower `sum |c - b|^2`.
pub(crate) fn polish<L: Layout>(
    layout: &L,
    moduli: &[f64],
    phases: &mut [f64],
    target: &[Complex64],
    fixed: usize,
) -> PolishStats {
    let values = |ph: &[f64]| -> Vec<Complex64> {
        moduli
            .iter()
            .zip(ph)
            .map(|(&m, &p)| Complex64::from_polar(m, p))
            .collect()
    };
    let mut a = values(phases);
    let (mut r, mut norm) = residual(layout, &a, target);
    let mut stats = PolishStats {
        steps: 0,
        residual_before: norm,
        residual_after: norm,
    };
    for _ in 0..POLISH_STEPS {
        if norm == 0.0 {
            break;
        }
        let d = cgls(layout, &a, &r, fixed);
        let trial: Vec<f64> = phases
            .iter()
            .zip(&d)
            .map(|(p, dp)| crate::triangle::wrap_phase(p + dp))
            .collect();
        let trial_values = values(&trial);
        let (trial_r, trial_norm) = residual(layout, &trial_values, target);
        if !(trial_norm < norm) {
            break;
        }
        phases.copy_from_slice(&trial);
        a = trial_values;
        r = trial_r;
        norm = trial_norm;
        stats.steps += 1;
    }
    stats.residual_after = norm;
    stats
}
