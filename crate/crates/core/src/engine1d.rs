//! One-dimensional recursive phase recovery.
//!
//! With coefficients `a_{s0} ..= a_{s1}` (local slots `0 ..= S-1`), the
//! autocorrelation row at lag `S-1-s` is
//!
//! ```text
//! b = a[S-1-s] conj(a[0]) + sum_{i=1}^{s-1} a[S-1-s+i] conj(a[i]) + a[S-1] conj(a[s])
//! ```
//!
//! Once the anchors `a[0]`, `a[S-1]` and the outer pairs of earlier steps are
//! known, only the first and last products are unknown, and each row is one
//! triangle equation in the phases of `a[S-1-s]` and `a[s]`. The two mirror
//! solutions are scored against every row with unresolved slots held at a
//! placeholder phase, and the closer one is kept.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polish::{polish, PolishStats};
use crate::search::{search, Proposal, SearchPath, SearchStats, SolveOptions, Stepwise, Walk};
use crate::selector::{Layout, Selector, SelectorMode};
use crate::spectral::{
    autocorr_from_magnitude, convolve_direct, forward_dft, AutocorrSpectrum, CenteredSpectrum,
    Grid, Support,
};
use crate::triangle::{
    solve_conjugate_pair, solve_triangle, wrap_phase, TriangleProblem, TriangleSolution,
};

/// Endpoint moduli at or below this fraction of the peak are trimmed.
pub const ANCHOR_TOLERANCE: f64 = 1e-9;
/// Relative mismatch between `|b_top|` and the anchor moduli that raises a flag.
pub const TOP_ROW_TOLERANCE: f64 = 1e-6;
/// Score gap, relative to the autocorrelation energy, treated as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Anomaly encountered during a solve. The solve continues past all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConsistencyFlag {
    SupportTrimmed {
        from: Support,
        to: Support,
    },
    InconsistentTop {
        expected: f64,
        measured: f64,
    },
    Clamped {
        step: usize,
        residual: f64,
    },
    Degenerate {
        step: usize,
    },
    Tie {
        step: usize,
    },
    /// No branch path reproducing every row was found within the budget;
    /// the closest complete path is reported.
    Unverified {
        expanded: usize,
    },
}

impl ConsistencyFlag {
    pub fn step(&self) -> Option<usize> {
        match self {
            Self::Clamped { step, .. } | Self::Degenerate { step } | Self::Tie { step } => {
                Some(*step)
            }
            _ => None,
        }
    }
}

/// One branch decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord<I> {
    pub step: usize,
    /// The pair resolved at this step; both entries equal for a middle slot.
    pub indices: (I, I),
    /// 1 or 2.
    pub branch: u8,
    /// `d(branch 2) - d(branch 1)`.
    pub gap: f64,
    pub tie: bool,
}

/// Input of a 1D solve: measured magnitudes and the coefficient moduli.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance1D {
    grid: Grid,
    field_magnitude: Vec<f64>,
    support: Support,
    coeff_magnitudes: Vec<f64>,
    priors: BTreeMap<i64, Complex64>,
    gauge_phase: Complex64,
}

fn check_magnitudes(values: &[f64]) -> Result<()> {
    match values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        Some((position, &value)) => Err(Error::InvalidMagnitude { position, value }),
        None => Ok(()),
    }
}

impl ProblemInstance1D {
    pub fn new(
        grid: Grid,
        field_magnitude: Vec<f64>,
        support: Support,
        coeff_magnitudes: Vec<f64>,
    ) -> Result<Self> {
        if field_magnitude.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: field_magnitude.len(),
            });
        }
        if coeff_magnitudes.len() != support.len() {
            return Err(Error::LengthMismatch {
                expected: support.len(),
                actual: coeff_magnitudes.len(),
            });
        }
        if !support.fits(grid) {
            return Err(Error::SupportOutsideGrid {
                s0: support.s0,
                s1: support.s1,
                grid_len: grid.len(),
            });
        }
        if !support.oversampled_on(grid) {
            return Err(Error::Undersampled {
                support: support.len(),
                grid_len: grid.len(),
            });
        }
        check_magnitudes(&field_magnitude)?;
        check_magnitudes(&coeff_magnitudes)?;
        Ok(Self {
            grid,
            field_magnitude,
            support,
            coeff_magnitudes,
            priors: BTreeMap::new(),
            gauge_phase: Complex64::new(1.0, 0.0),
        })
    }

    /// Noiseless instance measured from a known spectrum.
    pub fn from_spectrum(truth: &CenteredSpectrum) -> Result<Self> {
        let field = forward_dft(truth).magnitudes();
        let moduli = truth.support_values().iter().map(|a| a.norm()).collect();
        Self::new(truth.grid(), field, truth.support(), moduli)
    }

    /// Gauge as a phase angle.
    pub fn with_gauge(mut self, phase: f64) -> Self {
        self.gauge_phase = Complex64::cis(phase);
        self
    }

    /// Gauge as a complex number; only its direction is used.
    pub fn with_gauge_factor(mut self, factor: Complex64) -> Self {
        self.gauge_phase = if factor.norm() > 0.0 {
            factor / factor.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        self
    }

    pub fn with_prior(mut self, index: i64, phase: f64) -> Self {
        self.priors.insert(index, Complex64::cis(phase));
        self
    }

    pub fn with_priors(mut self, priors: impl IntoIterator<Item = (i64, Complex64)>) -> Self {
        for (index, hint) in priors {
            let unit = if hint.norm() > 0.0 {
                hint / hint.norm()
            } else {
                Complex64::new(1.0, 0.0)
            };
            self.priors.insert(index, unit);
        }
        self
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn field_magnitude(&self) -> &[f64] {
        &self.field_magnitude
    }

    pub fn coeff_magnitudes(&self) -> &[f64] {
        &self.coeff_magnitudes
    }

    pub fn modulus(&self, l: i64) -> f64 {
        if self.support.contains(l) {
            self.coeff_magnitudes[(l - self.support.s0) as usize]
        } else {
            0.0
        }
    }

    pub fn priors(&self) -> &BTreeMap<i64, Complex64> {
        &self.priors
    }

    pub fn gauge_phase(&self) -> Complex64 {
        self.gauge_phase
    }

    /// Placeholder phase for an unresolved slot: the prior, else zero,
    /// measured from the gauge so that a gauge change rotates it too.
    pub fn placeholder_phase(&self, l: i64) -> f64 {
        self.gauge_phase.arg() + self.priors.get(&l).map_or(0.0, |p| p.arg())
    }

    pub fn autocorr(&self) -> AutocorrSpectrum {
        let mag_sq: Vec<f64> = self.field_magnitude.iter().map(|f| f * f).collect();
        autocorr_from_magnitude(&mag_sq).expect("grid is non-empty")
    }
}

/// Shrinks the support to the smallest window with non-vanishing endpoints.
pub fn trim_support(inst: &ProblemInstance1D) -> Result<ProblemInstance1D> {
    let moduli = &inst.coeff_magnitudes;
    let peak = moduli.iter().copied().fold(0.0, f64::max);
    let tolerance = ANCHOR_TOLERANCE * peak;
    let first = moduli.iter().position(|&m| m > tolerance);
    let last = moduli.iter().rposition(|&m| m > tolerance);
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::EmptySupport);
    };
    if peak <= 0.0 {
        return Err(Error::EmptySupport);
    }
    let support = Support::new(
        inst.support.s0 + first as i64,
        inst.support.s0 + last as i64,
    );
    let mut trimmed = ProblemInstance1D::new(
        inst.grid,
        inst.field_magnitude.clone(),
        support,
        moduli[first..=last].to_vec(),
    )?;
    trimmed.priors = inst.priors.clone();
    trimmed.gauge_phase = inst.gauge_phase;
    Ok(trimmed)
}

/// Phases of the two support endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeAnchors {
    pub top: (i64, f64),
    pub bottom: (i64, f64),
    pub flag: Option<ConsistencyFlag>,
}

/// Fixes the phase of `a_{s1}` to the gauge and derives `a_{s0}` from
/// `b_top = a_{s1} conj(a_{s0})`.
pub fn fix_gauge(inst: &ProblemInstance1D, autocorr: &AutocorrSpectrum) -> GaugeAnchors {
    let support = inst.support;
    let top_phase = wrap_phase(inst.gauge_phase.arg());
    let b_top = autocorr.get(support.s1 - support.s0);
    let expected = inst.modulus(support.s1) * inst.modulus(support.s0);
    let measured = b_top.norm();
    let flag = ((measured - expected).abs() > TOP_ROW_TOLERANCE * expected || measured == 0.0)
        .then_some(ConsistencyFlag::InconsistentTop { expected, measured });
    let bottom_phase = if measured > 0.0 {
        wrap_phase(top_phase - b_top.arg())
    } else {
        top_phase
    };
    GaugeAnchors {
        top: (support.s1, top_phase),
        bottom: (support.s0, bottom_phase),
        flag,
    }
}

pub(crate) struct Layout1D {
    pub(crate) len: usize,
}

impl Layout for Layout1D {
    fn coeff_count(&self) -> usize {
        self.len
    }

    fn lag_count(&self) -> usize {
        2 * self.len - 1
    }

    #[inline]
    fn lag_of(&self, p: usize, q: usize) -> usize {
        p + self.len - 1 - q
    }

    fn autocorr(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let grid = Grid::new(self.lag_count()).expect("non-empty");
        let spec =
            CenteredSpectrum::from_support(grid, Support::new(0, self.len as i64 - 1), coeffs)
                .expect("support fits lag grid");
        convolve_direct(&spec).dense().to_vec()
    }
}

/// Both candidate assignments produced by one recursion step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCandidates {
    pub step: usize,
    pub indices: (i64, i64),
    /// `(logical index, phase)` assignments for branch 1 and branch 2.
    pub branches: [Vec<(i64, f64)>; 2],
    /// `None` when the step was degenerate and fell back to placeholders.
    pub solution: Option<TriangleSolution>,
    /// Sum of the triangle's side lengths.
    pub scale: f64,
}

/// Result of a 1D solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub recovered: CenteredSpectrum,
    /// Solved phase per support slot, in `[0, 2 pi)`.
    pub phases: Vec<f64>,
    pub branch_log: Vec<BranchRecord<i64>>,
    /// `sum |c - b|^2` over every row of the measurement grid.
    pub final_residual: f64,
    pub consistency_flags: Vec<ConsistencyFlag>,
    pub selector: SelectorMode,
    pub search: SearchStats,
    /// Zeroed when no refinement ran.
    pub polish: PolishStats,
}

impl SolveReport {
    /// `(step, indices, branch)` triples, the part of the log that must not
    /// depend on how residuals are maintained.
    pub fn decisions(&self) -> Vec<(usize, (i64, i64), u8)> {
        self.branch_log
            .iter()
            .map(|r| (r.step, r.indices, r.branch))
            .collect()
    }
}

/// Step-by-step state of a 1D solve.
pub struct Recursion1D {
    inst: ProblemInstance1D,
    autocorr: AutocorrSpectrum,
    walk: Walk<Layout1D, i64>,
}

impl Recursion1D {
    /// Trims the support, extracts the autocorrelation and fixes the gauge.
    pub fn new(inst: &ProblemInstance1D, mode: SelectorMode) -> Result<Self> {
        let trimmed = trim_support(inst)?;
        let mut flags = Vec::new();
        if trimmed.support != inst.support {
            flags.push(ConsistencyFlag::SupportTrimmed {
                from: inst.support,
                to: trimmed.support,
            });
        }
        let autocorr = trimmed.autocorr();
        let anchors = fix_gauge(&trimmed, &autocorr);
        flags.extend(anchors.flag.clone());

        let support = trimmed.support;
        let len = support.len();
        let mut phases = vec![None; len];
        phases[len - 1] = Some(anchors.top.1);
        phases[0] = Some(anchors.bottom.1);

        let coeffs: Vec<Complex64> = support
            .indices()
            .zip(&phases)
            .map(|(l, ph)| {
                Complex64::from_polar(
                    trimmed.modulus(l),
                    ph.unwrap_or(trimmed.placeholder_phase(l)),
                )
            })
            .collect();

        // Rows -(S-1) ..= S-1 are reachable; the rest of the grid is constant.
        let grid = autocorr.grid();
        let span = len as i64 - 1;
        let target: Vec<Complex64> = (-span..=span).map(|lag| autocorr.get(lag)).collect();
        let outside: f64 = grid
            .indices()
            .filter(|lag| lag.abs() > span)
            .map(|lag| autocorr.get(lag).norm_sqr())
            .sum();
        let selector = Selector::new(Layout1D { len }, mode, target, outside, coeffs);
        let walk = Walk::new(
            selector,
            trimmed.coeff_magnitudes.clone(),
            phases,
            flags,
            autocorr.energy(),
        );

        Ok(Self {
            inst: trimmed,
            autocorr,
            walk,
        })
    }

    /// The instance after support trimming.
    pub fn instance(&self) -> &ProblemInstance1D {
        &self.inst
    }

    pub fn autocorr(&self) -> &AutocorrSpectrum {
        &self.autocorr
    }

    /// Number of triangle (or middle-slot) steps after the anchors.
    pub fn step_count(&self) -> usize {
        self.inst.support.len().div_ceil(2) - 1
    }

    /// Residual `d = sum |c - b|^2` of the current working assignment.
    pub fn working_distance(&self) -> f64 {
        self.walk.selector.distance()
    }

    /// Builds the triangle of step `s` and returns its two candidates.
    pub fn recursion_step(&self, s: usize) -> StepCandidates {
        let len = self.inst.support.len();
        let s0 = self.inst.support.s0;
        assert!(s >= 1 && s <= self.step_count(), "step {s} out of range");
        let (hi, lo) = (len - 1 - s, s);
        let phases = &self.walk.phases;
        assert!(
            (1..s).all(|i| phases[i].is_some() && phases[hi + i].is_some()),
            "step {s} requested before earlier steps were resolved"
        );

        let value = |slot: usize| self.walk.value(slot);
        let lag = (len - 1 - s) as i64;
        let known: Complex64 = (1..s).map(|i| value(hi + i) * value(i).conj()).sum();
        let z = self.autocorr.get(lag) - known;
        let bottom = value(0);
        let top = value(len - 1);
        let moduli = &self.inst.coeff_magnitudes;
        let placeholder = |slot: usize| self.inst.placeholder_phase(s0 + slot as i64);

        if hi > lo {
            let problem = TriangleProblem::new(bottom.conj() * moduli[hi], top * moduli[lo], z)
                .set_default_phases(placeholder(hi), -placeholder(lo));
            let solution = solve_triangle(&problem).ok();
            let branches = match &solution {
                Some(sol) => sol.branches.map(|b| {
                    vec![
                        (s0 + hi as i64, b.alpha1),
                        (s0 + lo as i64, wrap_phase(-b.alpha2)),
                    ]
                }),
                None => {
                    let fallback = vec![
                        (s0 + hi as i64, placeholder(hi)),
                        (s0 + lo as i64, placeholder(lo)),
                    ];
                    [fallback.clone(), fallback]
                }
            };
            StepCandidates {
                step: s,
                indices: (s0 + hi as i64, s0 + lo as i64),
                branches,
                solution,
                scale: problem.x.norm() + problem.y.norm() + z.norm(),
            }
        } else {
            let mid = hi;
            let (p, q) = (bottom.conj() * moduli[mid], top * moduli[mid]);
            let solution = solve_conjugate_pair(p, q, z, placeholder(mid)).ok();
            let branches = match &solution {
                Some(sol) => sol.branches.map(|b| vec![(s0 + mid as i64, b.alpha1)]),
                None => {
                    let fallback = vec![(s0 + mid as i64, placeholder(mid))];
                    [fallback.clone(), fallback]
                }
            };
            StepCandidates {
                step: s,
                indices: (s0 + mid as i64, s0 + mid as i64),
                branches,
                solution,
                scale: p.norm() + q.norm() + z.norm(),
            }
        }
    }

    fn proposal(&self, candidates: &StepCandidates) -> Proposal<i64> {
        let s0 = self.inst.support.s0;
        Proposal {
            step: candidates.step,
            indices: candidates.indices,
            solution: candidates.solution,
            scale: candidates.scale,
            branches: candidates.branches.clone().map(|b| {
                b.into_iter()
                    .map(|(l, ph)| ((l - s0) as usize, ph))
                    .collect()
            }),
        }
    }

    /// Scores both candidates by the closest-point criterion and commits the
    /// better one.
    pub fn select_branch(&mut self, candidates: &StepCandidates) -> BranchRecord<i64> {
        let ranked = self.walk.rank(self.proposal(candidates));
        let preferred = ranked.preferred();
        self.walk.commit(&ranked, preferred)
    }

    pub fn finish(self) -> SolveReport {
        let mut stats = SearchStats::default();
        if self.walk.consistent(self.walk.selector.distance()) {
            stats.path = SearchPath::Verified;
        }
        self.finish_with(stats, false)
    }

    fn finish_with(self, search: SearchStats, refine: bool) -> SolveReport {
        let selector = self.walk.selector.mode();
        let support = self.inst.support;
        let mut phases: Vec<f64> = self
            .walk
            .phases
            .iter()
            .map(|p| p.expect("every slot resolved before finish"))
            .collect();
        let mut polish_stats = PolishStats::default();
        if refine && search.verified() && phases.len() > 1 {
            let top = phases.len() - 1;
            polish_stats = polish(
                self.walk.selector.layout(),
                &self.inst.coeff_magnitudes,
                &mut phases,
                self.walk.selector.target(),
                top,
            );
        }
        let values: Vec<Complex64> = self
            .inst
            .coeff_magnitudes
            .iter()
            .zip(&phases)
            .map(|(&m, &ph)| Complex64::from_polar(m, ph))
            .collect();
        let recovered = CenteredSpectrum::from_support(self.inst.grid, support, &values)
            .expect("trimmed support fits grid");
        let final_residual = convolve_direct(&recovered)
            .dense()
            .iter()
            .zip(self.autocorr.dense())
            .map(|(c, b)| (c - b).norm_sqr())
            .sum();
        let mut flags = self.walk.flags;
        if !search.verified() {
            flags.push(ConsistencyFlag::Unverified {
                expanded: search.expanded,
            });
        }
        SolveReport {
            recovered,
            phases,
            branch_log: self.walk.branch_log,
            final_residual,
            consistency_flags: flags,
            selector,
            search,
            polish: polish_stats,
        }
    }
}

impl Stepwise for Recursion1D {
    type Index = i64;
    type Layout = Layout1D;

    fn walk(&self) -> &Walk<Layout1D, i64> {
        &self.walk
    }

    fn walk_mut(&mut self) -> &mut Walk<Layout1D, i64> {
        &mut self.walk
    }

    fn step_count(&self) -> usize {
        Recursion1D::step_count(self)
    }

    fn propose(&mut self, s: usize) -> Proposal<i64> {
        let candidates = self.recursion_step(s);
        self.proposal(&candidates)
    }
}

/// Solves with the default options: incremental selector, branch search on.
pub fn solve_1d(inst: &ProblemInstance1D) -> Result<SolveReport> {
    solve_1d_with_options(inst, &SolveOptions::default())
}

pub fn solve_1d_with(inst: &ProblemInstance1D, mode: SelectorMode) -> Result<SolveReport> {
    let options = SolveOptions {
        selector: mode,
        ..SolveOptions::default()
    };
    solve_1d_with_options(inst, &options)
}

/// The greedy closest-point recursion alone, without backtracking.
pub fn solve_1d_greedy(inst: &ProblemInstance1D, mode: SelectorMode) -> Result<SolveReport> {
    solve_1d_with_options(inst, &SolveOptions::greedy(mode))
}

pub fn solve_1d_with_options(
    inst: &ProblemInstance1D,
    options: &SolveOptions,
) -> Result<SolveReport> {
    let mut rec = Recursion1D::new(inst, options.selector)?;
    let stats = search(&mut rec, options);
    Ok(rec.finish_with(stats, options.polish))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spectrum(grid: usize, s0: i64, values: &[Complex64]) -> CenteredSpectrum {
        let support = Support::new(s0, s0 + values.len() as i64 - 1);
        CenteredSpectrum::from_support(Grid::new(grid).unwrap(), support, values).unwrap()
    }

    fn gauge_error(recovered: &CenteredSpectrum, truth: &CenteredSpectrum) -> f64 {
        let overlap: Complex64 = recovered
            .dense()
            .iter()
            .zip(truth.dense())
            .map(|(r, t)| r.conj() * t)
            .sum();
        let rot = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            c(1.0, 0.0)
        };
        let diff: f64 = recovered
            .dense()
            .iter()
            .zip(truth.dense())
            .map(|(r, t)| (r * rot - t).norm_sqr())
            .sum();
        (diff / truth.norm_sqr()).sqrt()
    }

    #[test]
    fn trim_drops_vanishing_endpoints() {
        let inst = ProblemInstance1D::new(
            Grid::new(11).unwrap(),
            vec![1.0; 11],
            Support::new(-2, 2),
            vec![0.0, 0.0, 3.0, 1.0, 0.0],
        )
        .unwrap();
        assert_eq!(trim_support(&inst).unwrap().support(), Support::new(0, 1));

        let full = ProblemInstance1D::new(
            Grid::new(11).unwrap(),
            vec![1.0; 11],
            Support::new(-2, 2),
            vec![1.0, 0.0, 3.0, 1.0, 2.0],
        )
        .unwrap();
        assert_eq!(trim_support(&full).unwrap(), full);

        let empty = ProblemInstance1D::new(
            Grid::new(11).unwrap(),
            vec![0.0; 11],
            Support::new(-2, 2),
            vec![0.0; 5],
        )
        .unwrap();
        assert_eq!(trim_support(&empty), Err(Error::EmptySupport));
    }

    #[test]
    fn instance_validation() {
        let grid = Grid::new(5).unwrap();
        assert!(matches!(
            ProblemInstance1D::new(grid, vec![1.0; 5], Support::new(-2, 1), vec![1.0; 4]),
            Err(Error::Undersampled { .. })
        ));
        assert!(matches!(
            ProblemInstance1D::new(grid, vec![1.0; 4], Support::new(0, 1), vec![1.0; 2]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            ProblemInstance1D::new(grid, vec![1.0; 5], Support::new(0, 1), vec![1.0, -1.0]),
            Err(Error::InvalidMagnitude { position: 1, .. })
        ));
    }

    fn anchor_instance(b_top: Complex64) -> (ProblemInstance1D, AutocorrSpectrum) {
        // Only the top row matters to fix_gauge; build b by hand.
        let inst = ProblemInstance1D::new(
            Grid::new(3).unwrap(),
            vec![1.0; 3],
            Support::new(-1, 0),
            vec![1.0, 2.0],
        )
        .unwrap();
        let truth = spectrum(3, -1, &[c(1.0, 0.0), b_top]);
        let b = convolve_direct(&truth);
        (inst, b)
    }

    #[test]
    fn gauge_from_top_row() {
        let (inst, b) = anchor_instance(Complex64::from_polar(2.0, FRAC_PI_4));
        let anchors = fix_gauge(&inst, &b);
        assert_eq!(anchors.top, (0, 0.0));
        assert_eq!(anchors.bottom.0, -1);
        assert!((anchors.bottom.1 - (2.0 * PI - FRAC_PI_4)).abs() < 1e-12);
        assert!(anchors.flag.is_none());

        let (inst, b) = anchor_instance(c(2.0, 0.0));
        let anchors = fix_gauge(&inst, &b);
        assert_eq!(anchors.bottom.1, 0.0);
    }

    #[test]
    fn vanishing_top_row_is_flagged() {
        let inst = ProblemInstance1D::new(
            Grid::new(3).unwrap(),
            vec![1.0; 3],
            Support::new(-1, 0),
            vec![1.0, 2.0],
        )
        .unwrap();
        let b = autocorr_from_magnitude(&[1.0; 3]).unwrap();
        let anchors = fix_gauge(&inst, &b);
        assert!(matches!(
            anchors.flag,
            Some(ConsistencyFlag::InconsistentTop { .. })
        ));
    }

    #[test]
    fn single_coefficient_takes_gauge() {
        let truth = spectrum(5, 0, &[c(2.0, 0.0)]);
        let inst = ProblemInstance1D::from_spectrum(&truth)
            .unwrap()
            .with_gauge(0.4);
        let report = solve_1d(&inst).unwrap();
        assert!((report.recovered.get(0) - Complex64::from_polar(2.0, 0.4)).norm() < 1e-15);
        assert!(report.final_residual < 1e-24);
        assert!(report.branch_log.is_empty());
    }

    #[test]
    fn two_coefficients_up_to_gauge() {
        let truth = spectrum(3, -1, &[c(1.0, 0.0), Complex64::from_polar(2.0, FRAC_PI_3)]);
        let report = solve_1d(&ProblemInstance1D::from_spectrum(&truth).unwrap()).unwrap();
        assert!(gauge_error(&report.recovered, &truth) < 1e-12);
    }

    #[test]
    fn step_one_contains_true_pair() {
        let values = [
            c(1.0, 0.0),
            c(0.0, 1.0),
            c(-1.0, 0.0),
            Complex64::cis(FRAC_PI_4),
        ];
        let truth = spectrum(7, -2, &values);
        let inst = ProblemInstance1D::from_spectrum(&truth)
            .unwrap()
            .with_gauge(FRAC_PI_4);
        let rec = Recursion1D::new(&inst, SelectorMode::Incremental).unwrap();
        assert_eq!(rec.step_count(), 1);
        let cands = rec.recursion_step(1);
        assert_eq!(cands.indices, (0, -1));
        let hit = cands.branches.iter().any(|branch| {
            branch.iter().all(|&(l, phase)| {
                let want = truth.get(l).arg();
                let d = wrap_phase(phase - want);
                d.min(2.0 * PI - d) < 1e-10
            })
        });
        assert!(hit, "neither branch matches: {cands:?}");
    }

    #[test]
    fn corrupted_row_clamps() {
        let values = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.5, 0.5)];
        let truth = spectrum(7, -2, &values);
        // Adds 3 to b_{+-2}, more than the step-1 triangle can reach.
        let field: Vec<f64> = Grid::new(7)
            .unwrap()
            .indices()
            .zip(forward_dft(&truth).magnitudes())
            .map(|(k, f)| (f * f + 6.0 + 6.0 * (2.0 * PI * 2.0 * k as f64 / 7.0).cos()).sqrt())
            .collect();
        let inst = ProblemInstance1D::new(
            truth.grid(),
            field,
            truth.support(),
            values.iter().map(|v| v.norm()).collect(),
        )
        .unwrap();
        let report = solve_1d(&inst).unwrap();
        assert!(report
            .consistency_flags
            .iter()
            .any(|f| matches!(f, ConsistencyFlag::Clamped { .. })));
    }

    #[test]
    fn identical_branches_tie_to_first() {
        let values = [c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        let truth = spectrum(7, -2, &values);
        let inst = ProblemInstance1D::from_spectrum(&truth).unwrap();
        let mut rec = Recursion1D::new(&inst, SelectorMode::Incremental).unwrap();
        let mut cands = rec.recursion_step(1);
        cands.branches[1] = cands.branches[0].clone();
        let record = rec.select_branch(&cands);
        assert_eq!(record.branch, 1);
        assert!(record.tie);
    }

    #[test]
    fn odd_support_resolves_middle_slot() {
        let values = [
            Complex64::from_polar(0.9, 0.3),
            Complex64::from_polar(0.5, 2.0),
            Complex64::from_polar(1.2, -1.0),
            Complex64::from_polar(0.7, 0.8),
            Complex64::from_polar(1.1, 2.9),
        ];
        let truth = spectrum(9, -2, &values);
        let report = solve_1d(&ProblemInstance1D::from_spectrum(&truth).unwrap()).unwrap();
        assert_eq!(report.branch_log.last().unwrap().indices, (0, 0));
        assert!(gauge_error(&report.recovered, &truth) < 1e-10);
    }

    fn seeded_spectrum(len: usize, seed: u64) -> CenteredSpectrum {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<Complex64> = (0..len)
            .map(|_| Complex64::from_polar(rng.gen_range(0.1..1.0), rng.gen_range(0.0..2.0 * PI)))
            .collect();
        spectrum(2 * len - 1, -((len / 2) as i64), &values)
    }

    #[test]
    fn incremental_matches_full_recompute_each_step() {
        let truth = seeded_spectrum(16, 3);
        let inst = ProblemInstance1D::from_spectrum(&truth).unwrap();
        let mut rec = Recursion1D::new(&inst, SelectorMode::Incremental).unwrap();
        for s in 1..=rec.step_count() {
            let cands = rec.recursion_step(s);
            rec.select_branch(&cands);
            let full = rec
                .walk
                .selector
                .layout()
                .autocorr(rec.walk.selector.coeffs());
            for (a, b) in rec.walk.selector.autocorr().iter().zip(&full) {
                assert!((a - b).norm() < 1e-9);
            }
            let d_full = rec.walk.selector.distance_of(&full);
            assert!((rec.working_distance() - d_full).abs() < 1e-9);
        }
    }

    #[test]
    fn incremental_drift_stays_small() {
        let truth = seeded_spectrum(256, 11);
        let inst = ProblemInstance1D::from_spectrum(&truth).unwrap();
        let mut rec = Recursion1D::new(&inst, SelectorMode::Incremental).unwrap();
        for s in 1..=rec.step_count() {
            let cands = rec.recursion_step(s);
            rec.select_branch(&cands);
        }
        let full = rec
            .walk
            .selector
            .layout()
            .autocorr(rec.walk.selector.coeffs());
        let drift = rec
            .walk
            .selector
            .autocorr()
            .iter()
            .zip(&full)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(drift < 1e-7, "drift {drift:e}");
    }

    #[test]
    fn unchanged_assignment_keeps_residual() {
        let truth = seeded_spectrum(8, 5);
        let inst = ProblemInstance1D::from_spectrum(&truth).unwrap();
        let mut rec = Recursion1D::new(&inst, SelectorMode::Incremental).unwrap();
        let before = rec.working_distance();
        let same: Vec<(usize, Complex64)> = vec![(3, rec.walk.selector.coeffs()[3])];
        rec.walk.selector.set(&same);
        assert_eq!(rec.working_distance(), before);
    }

    #[test]
    fn moduli_are_preserved() {
        let truth = seeded_spectrum(32, 8);
        let inst = ProblemInstance1D::from_spectrum(&truth).unwrap();
        let report = solve_1d(&inst).unwrap();
        for (r, m) in report
            .recovered
            .support_values()
            .iter()
            .zip(inst.coeff_magnitudes())
        {
            assert!((r.norm() - m).abs() <= 4.0 * f64::EPSILON * m);
        }
    }

    #[test]
    fn gauge_covariance() {
        let truth = seeded_spectrum(16, 21);
        let inst = ProblemInstance1D::from_spectrum(&truth).unwrap();
        let base = solve_1d(&inst).unwrap();
        let turned = solve_1d(&inst.clone().with_gauge(1.3)).unwrap();
        assert_eq!(base.decisions(), turned.decisions());
        let rot = Complex64::cis(1.3);
        for (a, b) in base.recovered.dense().iter().zip(turned.recovered.dense()) {
            assert!((a * rot - b).norm() < 1e-12);
        }
    }
}
