//! Closest-point branch selection shared by the 1D and 2D engines.
//!
//! The selector keeps a working coefficient vector in which resolved
//! coefficients carry their solved phase and unresolved ones a placeholder
//! phase, together with its autocorrelation `c`. A candidate is scored by
//! `d = sum |c - b|^2` over every autocorrelation row.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// How the selector maintains `c` between candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorMode {
    /// Update only the rows touched by the changed coefficients: `O(S)` per step.
    #[default]
    Incremental,
    /// Recompute the autocorrelation from scratch for every candidate.
    Full,
}

impl std::str::FromStr for SelectorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "incremental" => Ok(Self::Incremental),
            "full" => Ok(Self::Full),
            other => Err(format!(
                "unknown selector '{other}' (expected full|incremental)"
            )),
        }
    }
}

/// Maps coefficient slots to autocorrelation rows.
pub(crate) trait Layout {
    fn coeff_count(&self) -> usize;
    fn lag_count(&self) -> usize;
    /// Row of the product `a_p conj(a_q)`.
    fn lag_of(&self, p: usize, q: usize) -> usize;
    /// Independent full recompute of the autocorrelation.
    fn autocorr(&self, coeffs: &[Complex64]) -> Vec<Complex64>;
}

/// A scored tentative assignment, ready to be accepted.
#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    coeffs: Vec<Complex64>,
    autocorr: Vec<Complex64>,
    pub distance: f64,
}

/// Working vector and autocorrelation, saved for backtracking.
#[derive(Debug, Clone)]
pub(crate) struct SelectorState {
    coeffs: Vec<Complex64>,
    autocorr: Vec<Complex64>,
}

pub(crate) struct Selector<L: Layout> {
    layout: L,
    mode: SelectorMode,
    target: Vec<Complex64>,
    /// Constant contribution of target rows no candidate can reach.
    outside: f64,
    coeffs: Vec<Complex64>,
    autocorr: Vec<Complex64>,
}

impl<L: Layout> Selector<L> {
    pub fn new(
        layout: L,
        mode: SelectorMode,
        target: Vec<Complex64>,
        outside: f64,
        coeffs: Vec<Complex64>,
    ) -> Self {
        assert_eq!(target.len(), layout.lag_count());
        assert_eq!(coeffs.len(), layout.coeff_count());
        let autocorr = layout.autocorr(&coeffs);
        Self {
            layout,
            mode,
            target,
            outside,
            coeffs,
            autocorr,
        }
    }

    pub fn mode(&self) -> SelectorMode {
        self.mode
    }

    pub fn layout(&self) -> &L {
        &self.layout
    }

    pub fn target(&self) -> &[Complex64] {
        &self.target
    }

    #[cfg(test)]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[cfg(test)]
    pub fn autocorr(&self) -> &[Complex64] {
        &self.autocorr
    }

    pub fn distance_of(&self, autocorr: &[Complex64]) -> f64 {
        self.outside
            + autocorr
                .iter()
                .zip(&self.target)
                .map(|(c, b)| (c - b).norm_sqr())
                .sum::<f64>()
    }

    pub fn distance(&self) -> f64 {
        self.distance_of(&self.autocorr)
    }

    /// Replaces slot `p` and patches every row containing it.
    fn apply(
        layout: &L,
        coeffs: &mut [Complex64],
        autocorr: &mut [Complex64],
        p: usize,
        value: Complex64,
    ) {
        let old = coeffs[p];
        let delta = value - old;
        for (q, &aq) in coeffs.iter().enumerate() {
            if q == p {
                autocorr[layout.lag_of(p, p)] += value.norm_sqr() - old.norm_sqr();
            } else {
                autocorr[layout.lag_of(p, q)] += delta * aq.conj();
                autocorr[layout.lag_of(q, p)] += aq * delta.conj();
            }
        }
        coeffs[p] = value;
    }

    /// Scores the working vector with `changes` applied, without committing.
    pub fn evaluate(&self, changes: &[(usize, Complex64)]) -> Candidate {
        let mut coeffs = self.coeffs.clone();
        let autocorr = match self.mode {
            SelectorMode::Incremental => {
                let mut autocorr = self.autocorr.clone();
                for &(p, value) in changes {
                    Self::apply(&self.layout, &mut coeffs, &mut autocorr, p, value);
                }
                autocorr
            }
            SelectorMode::Full => {
                for &(p, value) in changes {
                    coeffs[p] = value;
                }
                self.layout.autocorr(&coeffs)
            }
        };
        let distance = self.distance_of(&autocorr);
        Candidate {
            coeffs,
            autocorr,
            distance,
        }
    }

    pub fn accept(&mut self, candidate: Candidate) {
        self.coeffs = candidate.coeffs;
        self.autocorr = candidate.autocorr;
    }

    pub fn save(&self) -> SelectorState {
        SelectorState {
            coeffs: self.coeffs.clone(),
            autocorr: self.autocorr.clone(),
        }
    }

    pub fn restore(&mut self, state: &SelectorState) {
        self.coeffs.clone_from(&state.coeffs);
        self.autocorr.clone_from(&state.autocorr);
    }

    /// Commits a single assignment without scoring.
    #[cfg(test)]
    pub fn set(&mut self, changes: &[(usize, Complex64)]) {
        let candidate = self.evaluate(changes);
        self.accept(candidate);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine1d::Layout1D;

    fn coeffs(len: usize, shift: f64) -> Vec<Complex64> {
        (0..len)
            .map(|k| Complex64::from_polar(0.3 + 0.1 * k as f64, shift + 1.7 * k as f64))
            .collect()
    }

    fn selector(mode: SelectorMode) -> Selector<Layout1D> {
        let layout = Layout1D { len: 6 };
        let target = layout.autocorr(&coeffs(6, 0.4));
        Selector::new(layout, mode, target, 0.0, coeffs(6, 0.0))
    }

    #[test]
    fn incremental_matches_full_recompute() {
        let mut inc = selector(SelectorMode::Incremental);
        let mut full = selector(SelectorMode::Full);
        let rounds = [
            vec![
                (5, Complex64::new(0.2, 0.9)),
                (0, Complex64::new(-0.4, 0.1)),
            ],
            vec![(2, Complex64::new(0.0, -0.5))],
            vec![(3, Complex64::new(0.7, 0.7)), (3, Complex64::new(0.1, 0.2))],
        ];
        for changes in rounds {
            let (a, b) = (inc.evaluate(&changes), full.evaluate(&changes));
            assert!((a.distance - b.distance).abs() <= 1e-12 * b.distance.max(1.0));
            inc.accept(a);
            full.accept(b);
            for (x, y) in inc.autocorr().iter().zip(full.autocorr()) {
                assert!((x - y).norm() < 1e-12);
            }
        }
        assert_eq!(inc.coeffs(), full.coeffs());
    }

    #[test]
    fn evaluate_does_not_commit() {
        let sel = selector(SelectorMode::Incremental);
        let before = sel.distance();
        let _ = sel.evaluate(&[(1, Complex64::new(3.0, 0.0))]);
        assert_eq!(sel.distance(), before);
    }

    #[test]
    fn restore_undoes_accepted_changes() {
        let mut sel = selector(SelectorMode::Incremental);
        let state = sel.save();
        let before = sel.distance();
        sel.set(&[(4, Complex64::new(0.0, 1.0))]);
        assert_ne!(sel.distance(), before);
        sel.restore(&state);
        assert_eq!(sel.distance(), before);
    }

    #[test]
    fn distance_vanishes_at_target() {
        let mut sel = selector(SelectorMode::Full);
        let changes: Vec<_> = coeffs(6, 0.4).into_iter().enumerate().collect();
        sel.set(&changes);
        assert!(sel.distance() < 1e-24);
    }

    #[test]
    fn parses_modes() {
        assert_eq!("full".parse::<SelectorMode>(), Ok(SelectorMode::Full));
        assert_eq!(
            "incremental".parse::<SelectorMode>(),
            Ok(SelectorMode::Incremental)
        );
        assert!("greedy".parse::<SelectorMode>().is_err());
    }
}
