//! Two-phase triangle equations.
//!
//! [`solve_triangle`] finds `a1, a2` with `x e^{i a1} + y e^{i a2} = z`: the
//! vectors `x e^{i a1}`, `y e^{i a2}` and `z` close a triangle with known side
//! lengths, so the law of cosines fixes the angle between `x e^{i a1}` and `z`
//! up to a reflection about `z`. Both reflections are returned. When the side
//! lengths violate the triangle inequality the closest reachable point is
//! returned instead and the solution is marked infeasible.
//!
//! [`solve_conjugate_pair`] handles `P e^{i a} + Q e^{-i a} = z`, where the same
//! unknown phase enters twice.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative residual below which a solution counts as exact.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-10;

const DEGENERACY_SCALE: f64 = 1e-12;

/// Wraps an angle into `[0, 2 pi)`.
#[inline]
pub fn wrap_phase(angle: f64) -> f64 {
    let w = angle.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// `x e^{i a1} + y e^{i a2} = z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleProblem {
    pub x: Complex64,
    pub y: Complex64,
    pub z: Complex64,
    defaults: (f64, f64),
}

impl TriangleProblem {
    pub fn new(x: Complex64, y: Complex64, z: Complex64) -> Self {
        Self {
            x,
            y,
            z,
            defaults: (0.0, 0.0),
        }
    }

    /// Phases used for an unknown whose prefactor vanishes, and as the
    /// free representative when `z` vanishes.
    pub fn set_default_phases(mut self, alpha1: f64, alpha2: f64) -> Self {
        self.defaults = (wrap_phase(alpha1), wrap_phase(alpha2));
        self
    }

    pub fn defaults(&self) -> (f64, f64) {
        self.defaults
    }

    pub fn residual(&self, alpha1: f64, alpha2: f64) -> f64 {
        (self.x * Complex64::cis(alpha1) + self.y * Complex64::cis(alpha2) - self.z).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub alpha1: f64,
    pub alpha2: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleSolution {
    pub branches: [Branch; 2],
    /// Both branches solve the equation to [`FEASIBILITY_TOLERANCE`].
    pub feasible: bool,
}

impl TriangleSolution {
    fn from_pairs(pairs: [(f64, f64); 2], eval: impl Fn(f64, f64) -> f64, scale: f64) -> Self {
        let branches = pairs.map(|(a1, a2)| {
            let (alpha1, alpha2) = (wrap_phase(a1), wrap_phase(a2));
            Branch {
                alpha1,
                alpha2,
                residual: eval(alpha1, alpha2),
            }
        });
        let feasible = branches
            .iter()
            .all(|b| b.residual <= FEASIBILITY_TOLERANCE * scale);
        Self { branches, feasible }
    }

    pub fn branches_coincide(&self) -> bool {
        let [b1, b2] = self.branches;
        b1.alpha1 == b2.alpha1 && b1.alpha2 == b2.alpha2
    }
}

/// Twice the area of a triangle with the given sides, by Kahan's stable
/// Heron formula. Zero when the sides cannot close.
fn double_area(p: f64, q: f64, r: f64) -> f64 {
    let mut s = [p, q, r];
    s.sort_by(|u, v| v.total_cmp(u));
    let [a, b, c] = s;
    let product = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    if product > 0.0 {
        0.5 * product.sqrt()
    } else {
        0.0
    }
}

pub fn solve_triangle(p: &TriangleProblem) -> Result<TriangleSolution> {
    let (a, b, c) = (p.x.norm(), p.y.norm(), p.z.norm());
    let tau = DEGENERACY_SCALE * a.max(b).max(c).max(1.0);
    let scale = a + b + c;
    let (d1, d2) = p.defaults;
    let eval = |a1: f64, a2: f64| p.residual(a1, a2);

    // Second phase from the remainder once the first is fixed.
    let complete = |alpha1: f64| {
        let rest = p.z - p.x * Complex64::cis(alpha1);
        if b <= tau || rest.norm() <= tau {
            d2
        } else {
            rest.arg() - p.y.arg()
        }
    };

    if a <= tau && b <= tau {
        if c > tau {
            return Err(Error::DegenerateTriangle { z_norm: c });
        }
        return Ok(TriangleSolution::from_pairs([(d1, d2); 2], eval, scale));
    }
    if a <= tau {
        let pair = (d1, complete(d1));
        return Ok(TriangleSolution::from_pairs([pair; 2], eval, scale));
    }
    if b <= tau {
        let rest = p.z - p.y * Complex64::cis(d2);
        let alpha1 = if rest.norm() <= tau {
            d1
        } else {
            rest.arg() - p.x.arg()
        };
        return Ok(TriangleSolution::from_pairs([(alpha1, d2); 2], eval, scale));
    }
    if c <= tau {
        // One-parameter family: x e^{i a1} = -y e^{i a2}. Representatives are
        // the first vector on the positive real axis, then the default phase.
        let first = -p.x.arg();
        let pairs = [(first, complete(first)), (d1, complete(d1))];
        return Ok(TriangleSolution::from_pairs(pairs, eval, scale));
    }

    // Angle at the vertex between the x-side and the z-side.
    let cos_theta = (a * a + c * c - b * b) / (2.0 * a * c);
    let sin_theta = double_area(a, b, c) / (a * c);
    let theta = sin_theta.atan2(cos_theta);
    let base = p.z.arg() - p.x.arg();
    let pairs = [base + theta, base - theta].map(|alpha1| (alpha1, complete(alpha1)));
    Ok(TriangleSolution::from_pairs(pairs, eval, scale))
}

fn conjugate_residual(p: Complex64, q: Complex64, z: Complex64, alpha: f64) -> f64 {
    let e = Complex64::cis(alpha);
    (p * e + q * e.conj() - z).norm()
}

/// Safeguarded Newton descent on `|P e^{ia} + Q e^{-ia} - z|^2`.
fn polish_conjugate(p: Complex64, q: Complex64, z: Complex64, start: f64) -> f64 {
    let objective = |alpha: f64| conjugate_residual(p, q, z, alpha).powi(2);
    let mut alpha = start;
    let mut value = objective(alpha);
    for _ in 0..32 {
        let e = Complex64::cis(alpha);
        let h = p * e + q * e.conj() - z;
        let dh = Complex64::i() * (p * e - q * e.conj());
        let ddh = -(p * e + q * e.conj());
        let grad = 2.0 * (h.conj() * dh).re;
        let curv = 2.0 * (dh.norm_sqr() + (h.conj() * ddh).re);
        if grad == 0.0 {
            break;
        }
        let step = if curv > 0.0 {
            grad / curv
        } else {
            grad.signum() * 1e-3
        };
        let mut trial = alpha - step;
        let mut trial_value = objective(trial);
        let mut damping = 0;
        while trial_value > value && damping < 30 {
            trial = alpha - step * 0.5f64.powi(damping + 1);
            trial_value = objective(trial);
            damping += 1;
        }
        if trial_value > value {
            break;
        }
        let converged = (trial - alpha).abs() < 1e-15;
        alpha = trial;
        value = trial_value;
        if converged {
            break;
        }
    }
    alpha
}

/// Solves `P e^{i a} + Q e^{-i a} = z` in the least-squares sense.
///
/// Branches report `alpha1 = a` and `alpha2 = -a`, so the result plugs into
/// the same two-branch interface as [`solve_triangle`] with `x = P`, `y = Q`.
pub fn solve_conjugate_pair(
    p: Complex64,
    q: Complex64,
    z: Complex64,
    default: f64,
) -> Result<TriangleSolution> {
    let (np, nq, nz) = (p.norm(), q.norm(), z.norm());
    let tau = DEGENERACY_SCALE * np.max(nq).max(nz).max(1.0);
    let scale = np + nq + nz;
    let eval = |a1: f64, _a2: f64| conjugate_residual(p, q, z, a1);
    let pair = |alpha: f64| (alpha, -alpha);

    if np <= tau && nq <= tau {
        if nz > tau {
            return Err(Error::DegenerateTriangle { z_norm: nz });
        }
        return Ok(TriangleSolution::from_pairs(
            [pair(default); 2],
            eval,
            scale,
        ));
    }

    let det = np * np - nq * nq;
    if det.abs() > 1e-10 * (np * np + nq * nq) {
        // (P + Q) cos a + i (P - Q) sin a = z as a real 2x2 system.
        let u = p + q;
        let v = Complex64::i() * (p - q);
        let m = u.re * v.im - v.re * u.im;
        let cos_a = (z.re * v.im - v.re * z.im) / m;
        let sin_a = (u.re * z.im - z.re * u.im) / m;
        let linear = sin_a.atan2(cos_a);
        let mut best = polish_conjugate(p, q, z, linear);
        // Off the ellipse the linear solution is only a starting guess.
        if conjugate_residual(p, q, z, best) > FEASIBILITY_TOLERANCE * scale {
            for k in 0..64 {
                let guess = polish_conjugate(p, q, z, TAU * k as f64 / 64.0);
                if conjugate_residual(p, q, z, guess) < conjugate_residual(p, q, z, best) {
                    best = guess;
                }
            }
        }
        return Ok(TriangleSolution::from_pairs([pair(best); 2], eval, scale));
    }

    // |P| = |Q|: the image is a segment, 2r e^{i(p+q)/2} cos(a + (p-q)/2).
    let r = 0.5 * (np + nq);
    let mid = 0.5 * (p.arg() + q.arg());
    let shift = 0.5 * (p.arg() - q.arg());
    let w = ((z * Complex64::cis(-mid)).re / (2.0 * r)).clamp(-1.0, 1.0);
    let beta = w.acos();
    let branches =
        [beta - shift, -beta - shift].map(|alpha| pair(polish_conjugate(p, q, z, alpha)));
    Ok(TriangleSolution::from_pairs(branches, eval, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: f64, b: f64) -> bool {
        let d = wrap_phase(a - b);
        d.min(TAU - d) < 1e-12
    }

    #[test]
    fn colinear_maximal_sum() {
        let s =
            solve_triangle(&TriangleProblem::new(c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0))).unwrap();
        assert!(s.feasible);
        for b in s.branches {
            assert!(close(b.alpha1, 0.0) && close(b.alpha2, 0.0));
        }
    }

    #[test]
    fn right_angle_two_branches() {
        let s =
            solve_triangle(&TriangleProblem::new(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 1.0))).unwrap();
        assert!(s.feasible);
        let [b1, b2] = s.branches;
        assert!(close(b1.alpha1, FRAC_PI_2) && close(b1.alpha2, 0.0));
        assert!(close(b2.alpha1, 0.0) && close(b2.alpha2, FRAC_PI_2));
        assert!(b1.residual < 1e-15 && b2.residual < 1e-15);
    }

    #[test]
    fn too_long_z_is_clamped() {
        let s =
            solve_triangle(&TriangleProblem::new(c(1.0, 0.0), c(1.0, 0.0), c(3.0, 0.0))).unwrap();
        assert!(!s.feasible);
        assert!(s.branches_coincide());
        let b = s.branches[0];
        assert!(close(b.alpha1, 0.0) && close(b.alpha2, 0.0));
        assert!((b.residual - 1.0).abs() < 1e-15);
    }

    #[test]
    fn too_short_z_is_clamped_to_annulus() {
        // |x| - |y| = 2 > |z|: best is x along z, y against it.
        let s =
            solve_triangle(&TriangleProblem::new(c(3.0, 0.0), c(1.0, 0.0), c(0.0, 0.5))).unwrap();
        assert!(!s.feasible);
        let b = s.branches[0];
        assert!(close(b.alpha1, FRAC_PI_2));
        assert!(close(b.alpha2, FRAC_PI_2 + PI));
        assert!((b.residual - 1.5).abs() < 1e-14);
    }

    #[test]
    fn anti_aligned_family() {
        let s = solve_triangle(
            &TriangleProblem::new(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
                .set_default_phases(0.7, 0.0),
        )
        .unwrap();
        assert!(s.feasible);
        let [b1, b2] = s.branches;
        assert!(close(b1.alpha1, 0.0) && close(b1.alpha2, PI));
        assert!(close(b2.alpha1, 0.7) && close(b2.alpha2, 0.7 + PI));
    }

    #[test]
    fn vanishing_prefactor_uses_default() {
        let p = TriangleProblem::new(c(0.0, 0.0), c(0.0, 2.0), c(2.0, 0.0))
            .set_default_phases(1.0, 0.0);
        let s = solve_triangle(&p).unwrap();
        assert!(s.feasible);
        assert!(close(s.branches[0].alpha1, 1.0));
        assert!(close(s.branches[0].alpha2, -FRAC_PI_2));
    }

    #[test]
    fn both_prefactors_vanish() {
        let p = TriangleProblem::new(c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0));
        assert!(matches!(
            solve_triangle(&p),
            Err(Error::DegenerateTriangle { .. })
        ));
        let p = TriangleProblem::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
        assert!(solve_triangle(&p).unwrap().feasible);
    }

    #[test]
    fn conjugate_pair_examples() {
        let s = solve_conjugate_pair(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), 0.0).unwrap();
        assert!(s.feasible);
        assert!(close(s.branches[0].alpha1, FRAC_PI_3));
        assert!(close(s.branches[1].alpha1, 5.0 * FRAC_PI_3));

        let s = solve_conjugate_pair(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0), 0.0).unwrap();
        assert!(s.feasible && s.branches_coincide());
        assert!(close(s.branches[0].alpha1, FRAC_PI_2));

        let s = solve_conjugate_pair(c(1.0, 0.0), c(1.0, 0.0), c(3.0, 0.0), 0.0).unwrap();
        assert!(!s.feasible);
        assert!(close(s.branches[0].alpha1, 0.0));
        assert!((s.branches[0].residual - 1.0).abs() < 1e-12);

        assert!(matches!(
            solve_conjugate_pair(c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), 0.0),
            Err(Error::DegenerateTriangle { .. })
        ));
    }

    #[test]
    fn conjugate_pair_generic_exact() {
        let p = c(0.8, -0.3);
        let q = c(-0.2, 0.4);
        let truth = 2.1;
        let z = p * Complex64::cis(truth) + q * Complex64::cis(-truth);
        let s = solve_conjugate_pair(p, q, z, 0.0).unwrap();
        assert!(s.feasible);
        assert!(close(s.branches[0].alpha1, truth));
        assert!(close(s.branches[0].alpha2, -truth));
    }
}
