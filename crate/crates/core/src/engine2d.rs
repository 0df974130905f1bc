//! Two-dimensional recursive phase recovery.
//!
//! Coefficients `a_{u,v}` with `u, v` in `[-N, N]` are resolved in mirrored
//! pairs `(a_{u,v}, a_{-u,-v})`, walking anti-diagonals `u + v = sigma` from
//! the `(N, N)` corner inward. The row `b_{u+N, v+N}` then contains exactly
//! two unresolved products,
//!
//! ```text
//! a_{u,v} conj(a_{-N,-N})   and   a_{N,N} conj(a_{-u,-v}),
//! ```
//!
//! every other product pairing a coefficient with larger `sigma` against one
//! with smaller `-sigma`. The `sigma = 0` diagonal follows with `u > 0`, and
//! the center is solved last against itself.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::engine1d::{BranchRecord, ConsistencyFlag, ANCHOR_TOLERANCE, TOP_ROW_TOLERANCE};
use crate::error::{Error, Result};
use crate::polish::{polish, PolishStats};
use crate::search::{search, Proposal, SearchStats, SolveOptions, Stepwise, Walk};
use crate::selector::{Layout, Selector, SelectorMode};
use crate::spectral::{Grid, Twiddles};
use crate::triangle::{solve_conjugate_pair, solve_triangle, wrap_phase, TriangleProblem};

pub type Index2 = (i64, i64);

/// Square array of coefficients `a_{u,v}`, `u, v` in `[-N, N]`, row-major in `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum2D {
    order: usize,
    coeffs: Vec<Complex64>,
}

impl Spectrum2D {
    pub fn new(order: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        let w = 2 * order + 1;
        if coeffs.len() != w * w {
            return Err(Error::LengthMismatch {
                expected: w * w,
                actual: coeffs.len(),
            });
        }
        Ok(Self { order, coeffs })
    }

    pub fn from_fn(order: usize, mut f: impl FnMut(i64, i64) -> Complex64) -> Self {
        let n = order as i64;
        let coeffs = (-n..=n)
            .flat_map(|u| (-n..=n).map(move |v| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        Self { order, coeffs }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn width(&self) -> usize {
        2 * self.order + 1
    }

    #[inline]
    pub fn slot(&self, u: i64, v: i64) -> usize {
        let n = self.order as i64;
        ((u + n) as usize) * self.width() + (v + n) as usize
    }

    pub fn index_of(&self, slot: usize) -> Index2 {
        let n = self.order as i64;
        let w = self.width();
        ((slot / w) as i64 - n, (slot % w) as i64 - n)
    }

    pub fn contains(&self, u: i64, v: i64) -> bool {
        let n = self.order as i64;
        u.abs() <= n && v.abs() <= n
    }

    pub fn get(&self, u: i64, v: i64) -> Complex64 {
        if self.contains(u, v) {
            self.coeffs[self.slot(u, v)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            order: self.order,
            coeffs: self.coeffs.iter().map(|a| a * factor).collect(),
        }
    }
}

/// `b_{l1,l2}` for `l1, l2` in `[-2N, 2N]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autocorr2D {
    order: usize,
    coeffs: Vec<Complex64>,
}

impl Autocorr2D {
    pub fn order(&self) -> usize {
        self.order
    }

    fn width(&self) -> usize {
        4 * self.order + 1
    }

    pub fn get(&self, l1: i64, l2: i64) -> Complex64 {
        let span = 2 * self.order as i64;
        if l1.abs() > span || l2.abs() > span {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[((l1 + span) as usize) * self.width() + (l2 + span) as usize]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.coeffs
    }
}

/// `F(k1, k2) = sum a_{u,v} exp(2 pi i (u k1 + v k2) / M)`, row-major in `k1`.
pub fn forward_dft_2d(spec: &Spectrum2D, grid: Grid) -> Vec<Complex64> {
    let tw = Twiddles::new(grid);
    let n = spec.order() as i64;
    // Separable: first along v, then along u.
    let partial: Vec<Vec<Complex64>> = (-n..=n)
        .map(|u| {
            grid.indices()
                .map(|k2| (-n..=n).map(|v| spec.get(u, v) * tw.at(v, k2)).sum())
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(grid.len() * grid.len());
    for k1 in grid.indices() {
        for k2 in 0..grid.len() {
            out.push(
                (-n..=n)
                    .zip(&partial)
                    .map(|(u, row)| row[k2] * tw.at(u, k1))
                    .sum(),
            );
        }
    }
    out
}

/// Autocorrelation rows from squared magnitudes on an `M x M` grid.
pub fn autocorr2d(mag_sq: &[f64], grid: Grid, order: usize) -> Result<Autocorr2D> {
    let m = grid.len();
    if mag_sq.len() != m * m {
        return Err(Error::LengthMismatch {
            expected: m * m,
            actual: mag_sq.len(),
        });
    }
    if m < 4 * order + 1 {
        return Err(Error::Undersampled {
            support: 2 * order + 1,
            grid_len: m,
        });
    }
    let tw = Twiddles::new(grid);
    let span = 2 * order as i64;
    let partial: Vec<Vec<Complex64>> = grid
        .indices()
        .enumerate()
        .map(|(r, _k1)| {
            let row = &mag_sq[r * m..(r + 1) * m];
            (-span..=span)
                .map(|l2| {
                    grid.indices()
                        .zip(row)
                        .map(|(k2, &p)| tw.at(l2, k2).conj() * p)
                        .sum()
                })
                .collect()
        })
        .collect();
    let scale = 1.0 / (m * m) as f64;
    let width = 4 * order + 1;
    let mut coeffs = Vec::with_capacity(width * width);
    for l1 in -span..=span {
        for c in 0..width {
            let sum: Complex64 = grid
                .indices()
                .zip(&partial)
                .map(|(k1, row)| row[c] * tw.at(l1, k1).conj())
                .sum();
            coeffs.push(sum * scale);
        }
    }
    Ok(Autocorr2D { order, coeffs })
}

/// Direct double-sum autocorrelation.
pub fn convolve_direct_2d(spec: &Spectrum2D) -> Autocorr2D {
    let order = spec.order();
    let w = spec.width();
    let width = 4 * order + 1;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); width * width];
    for (p, ap) in spec.values().iter().enumerate() {
        let (pu, pv) = (p / w, p % w);
        for (q, aq) in spec.values().iter().enumerate() {
            let (qu, qv) = (q / w, q % w);
            let row = (pu + 2 * order - qu) * width + (pv + 2 * order - qv);
            coeffs[row] += ap * aq.conj();
        }
    }
    Autocorr2D { order, coeffs }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance2D {
    grid: Grid,
    order: usize,
    field_magnitude: Vec<f64>,
    coeff_magnitudes: Vec<f64>,
    priors: BTreeMap<Index2, Complex64>,
    gauge_phase: Complex64,
}

impl ProblemInstance2D {
    pub fn new(
        grid: Grid,
        order: usize,
        field_magnitude: Vec<f64>,
        coeff_magnitudes: Vec<f64>,
    ) -> Result<Self> {
        let m = grid.len();
        let w = 2 * order + 1;
        if field_magnitude.len() != m * m {
            return Err(Error::LengthMismatch {
                expected: m * m,
                actual: field_magnitude.len(),
            });
        }
        if coeff_magnitudes.len() != w * w {
            return Err(Error::LengthMismatch {
                expected: w * w,
                actual: coeff_magnitudes.len(),
            });
        }
        if m < 4 * order + 1 {
            return Err(Error::Undersampled {
                support: w,
                grid_len: m,
            });
        }
        for values in [&field_magnitude, &coeff_magnitudes] {
            if let Some((position, &value)) = values
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v < 0.0)
            {
                return Err(Error::InvalidMagnitude { position, value });
            }
        }
        Ok(Self {
            grid,
            order,
            field_magnitude,
            coeff_magnitudes,
            priors: BTreeMap::new(),
            gauge_phase: Complex64::new(1.0, 0.0),
        })
    }

    pub fn from_spectrum(truth: &Spectrum2D, grid: Grid) -> Result<Self> {
        let field = forward_dft_2d(truth, grid)
            .iter()
            .map(|f| f.norm())
            .collect();
        let moduli = truth.values().iter().map(|a| a.norm()).collect();
        Self::new(grid, truth.order(), field, moduli)
    }

    pub fn with_gauge(mut self, phase: f64) -> Self {
        self.gauge_phase = Complex64::cis(phase);
        self
    }

    pub fn with_gauge_factor(mut self, factor: Complex64) -> Self {
        self.gauge_phase = if factor.norm() > 0.0 {
            factor / factor.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        self
    }

    pub fn with_prior(mut self, index: Index2, phase: f64) -> Self {
        self.priors.insert(index, Complex64::cis(phase));
        self
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn field_magnitude(&self) -> &[f64] {
        &self.field_magnitude
    }

    pub fn coeff_magnitudes(&self) -> &[f64] {
        &self.coeff_magnitudes
    }

    pub fn priors(&self) -> &BTreeMap<Index2, Complex64> {
        &self.priors
    }

    pub fn gauge_phase(&self) -> Complex64 {
        self.gauge_phase
    }

    /// Placeholder phase for an unresolved coefficient, relative to the gauge.
    pub fn placeholder_phase(&self, idx: Index2) -> f64 {
        self.gauge_phase.arg() + self.priors.get(&idx).map_or(0.0, |p| p.arg())
    }

    pub fn autocorr(&self) -> Autocorr2D {
        let mag_sq: Vec<f64> = self.field_magnitude.iter().map(|f| f * f).collect();
        autocorr2d(&mag_sq, self.grid, self.order).expect("validated on construction")
    }
}

pub(crate) struct Layout2D {
    order: usize,
}

impl Layout for Layout2D {
    fn coeff_count(&self) -> usize {
        (2 * self.order + 1).pow(2)
    }

    fn lag_count(&self) -> usize {
        (4 * self.order + 1).pow(2)
    }

    #[inline]
    fn lag_of(&self, p: usize, q: usize) -> usize {
        let w = 2 * self.order + 1;
        let width = 4 * self.order + 1;
        (p / w + 2 * self.order - q / w) * width + (p % w + 2 * self.order - q % w)
    }

    fn autocorr(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let spec = Spectrum2D::new(self.order, coeffs.to_vec()).expect("layout size");
        convolve_direct_2d(&spec).coeffs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport2D {
    pub recovered: Spectrum2D,
    pub phases: Vec<f64>,
    pub branch_log: Vec<BranchRecord<Index2>>,
    /// `sum |c - b|^2` over every row `[-2N, 2N]^2`.
    pub final_residual: f64,
    pub consistency_flags: Vec<ConsistencyFlag>,
    pub selector: SelectorMode,
    /// Rows whose unresolved products were verified before solving.
    pub ordering_checks: usize,
    pub search: SearchStats,
    pub polish: PolishStats,
}

impl SolveReport2D {
    pub fn decisions(&self) -> Vec<(usize, (Index2, Index2), u8)> {
        self.branch_log
            .iter()
            .map(|r| (r.step, r.indices, r.branch))
            .collect()
    }
}

/// Pairs in processing order: anti-diagonals from `2N - 1` down to 1 with `u`
/// decreasing, then `sigma = 0` with `u > 0`.
pub fn pair_order(order: usize) -> Vec<(Index2, Index2)> {
    let n = order as i64;
    let mut pairs = Vec::new();
    for sigma in (1..2 * n).rev() {
        for u in (-n..=n).rev() {
            let v = sigma - u;
            if v.abs() <= n {
                pairs.push(((u, v), (-u, -v)));
            }
        }
    }
    for u in (1..=n).rev() {
        pairs.push(((u, -u), (-u, u)));
    }
    pairs
}

struct Recursion2D<'a> {
    inst: &'a ProblemInstance2D,
    shape: Spectrum2D,
    autocorr: Autocorr2D,
    pairs: Vec<(Index2, Index2)>,
    walk: Walk<Layout2D, Index2>,
    ordering_checks: usize,
}

impl Recursion2D<'_> {
    fn slot(&self, idx: Index2) -> usize {
        self.shape.slot(idx.0, idx.1)
    }

    fn modulus(&self, idx: Index2) -> f64 {
        self.inst.coeff_magnitudes[self.slot(idx)]
    }

    fn placeholder(&self, idx: Index2) -> f64 {
        self.inst.placeholder_phase(idx)
    }

    fn value(&self, idx: Index2) -> Complex64 {
        self.walk.value(self.slot(idx))
    }

    fn resolved(&self, idx: Index2) -> bool {
        self.walk.phases[self.slot(idx)].is_some()
    }

    /// Sum of the resolved products in row `lag`, asserting that the
    /// unresolved ones are exactly `expected`.
    fn known_part(&mut self, lag: Index2, expected: &[(Index2, Index2)]) -> Complex64 {
        let n = self.shape.order() as i64;
        let mut known = Complex64::new(0.0, 0.0);
        let mut unresolved = Vec::new();
        for j1 in (lag.0 - n).max(-n)..=n {
            for j2 in (lag.1 - n).max(-n)..=n {
                let (j, i) = ((j1, j2), (j1 - lag.0, j2 - lag.1));
                if self.resolved(j) && self.resolved(i) {
                    known += self.value(j) * self.value(i).conj();
                } else {
                    unresolved.push((j, i));
                }
            }
        }
        unresolved.sort_unstable();
        let mut want = expected.to_vec();
        want.sort_unstable();
        assert_eq!(
            unresolved, want,
            "row {lag:?} has unexpected unresolved products"
        );
        self.ordering_checks += 1;
        known
    }

    fn finish(self, search: SearchStats, refine: bool) -> Result<SolveReport2D> {
        let mut phases: Vec<f64> = self
            .walk
            .phases
            .iter()
            .map(|p| p.expect("every coefficient resolved"))
            .collect();
        let mut polish_stats = PolishStats::default();
        if refine && search.verified() && phases.len() > 1 {
            let n = self.shape.order() as i64;
            polish_stats = polish(
                self.walk.selector.layout(),
                &self.inst.coeff_magnitudes,
                &mut phases,
                self.walk.selector.target(),
                self.shape.slot(n, n),
            );
        }
        let recovered = Spectrum2D::new(
            self.inst.order,
            self.inst
                .coeff_magnitudes
                .iter()
                .zip(&phases)
                .map(|(&m, &ph)| Complex64::from_polar(m, ph))
                .collect(),
        )?;
        let final_residual = convolve_direct_2d(&recovered)
            .values()
            .iter()
            .zip(self.autocorr.values())
            .map(|(c, b)| (c - b).norm_sqr())
            .sum();
        let mut flags = self.walk.flags;
        if !search.verified() {
            flags.push(ConsistencyFlag::Unverified {
                expanded: search.expanded,
            });
        }
        Ok(SolveReport2D {
            recovered,
            phases,
            branch_log: self.walk.branch_log,
            final_residual,
            consistency_flags: flags,
            selector: self.walk.selector.mode(),
            ordering_checks: self.ordering_checks,
            search,
            polish: polish_stats,
        })
    }
}

impl Stepwise for Recursion2D<'_> {
    type Index = Index2;
    type Layout = Layout2D;

    fn walk(&self) -> &Walk<Layout2D, Index2> {
        &self.walk
    }

    fn walk_mut(&mut self) -> &mut Walk<Layout2D, Index2> {
        &mut self.walk
    }

    fn step_count(&self) -> usize {
        if self.shape.order() == 0 {
            0
        } else {
            self.pairs.len() + 1
        }
    }

    fn propose(&mut self, s: usize) -> Proposal<Index2> {
        let n = self.shape.order() as i64;
        let (top, bottom) = ((n, n), (-n, -n));
        if let Some(&(pos, neg)) = self.pairs.get(s - 1) {
            let lag = (pos.0 + n, pos.1 + n);
            let known = self.known_part(lag, &[(pos, bottom), (top, neg)]);
            let z = self.autocorr.get(lag.0, lag.1) - known;
            let problem = TriangleProblem::new(
                self.value(bottom).conj() * self.modulus(pos),
                self.value(top) * self.modulus(neg),
                z,
            )
            .set_default_phases(self.placeholder(pos), -self.placeholder(neg));
            let solution = solve_triangle(&problem).ok();
            let (ps, ns) = (self.slot(pos), self.slot(neg));
            let branches = match &solution {
                Some(sol) => sol
                    .branches
                    .map(|b| vec![(ps, b.alpha1), (ns, wrap_phase(-b.alpha2))]),
                None => {
                    let fallback = vec![(ps, self.placeholder(pos)), (ns, self.placeholder(neg))];
                    [fallback.clone(), fallback]
                }
            };
            Proposal {
                step: s,
                indices: (pos, neg),
                solution,
                scale: problem.x.norm() + problem.y.norm() + z.norm(),
                branches,
            }
        } else {
            let center = (0, 0);
            let known = self.known_part((n, n), &[(center, bottom), (top, center)]);
            let z = self.autocorr.get(n, n) - known;
            let m = self.modulus(center);
            let (p, q) = (self.value(bottom).conj() * m, self.value(top) * m);
            let solution = solve_conjugate_pair(p, q, z, self.placeholder(center)).ok();
            let cs = self.slot(center);
            let branches = match &solution {
                Some(sol) => sol.branches.map(|b| vec![(cs, b.alpha1)]),
                None => {
                    let fallback = vec![(cs, self.placeholder(center))];
                    [fallback.clone(), fallback]
                }
            };
            Proposal {
                step: s,
                indices: (center, center),
                solution,
                scale: p.norm() + q.norm() + z.norm(),
                branches,
            }
        }
    }
}

pub fn solve_2d(inst: &ProblemInstance2D) -> Result<SolveReport2D> {
    solve_2d_with_options(inst, &SolveOptions::default())
}

pub fn solve_2d_with(inst: &ProblemInstance2D, mode: SelectorMode) -> Result<SolveReport2D> {
    let options = SolveOptions {
        selector: mode,
        ..SolveOptions::default()
    };
    solve_2d_with_options(inst, &options)
}

pub fn solve_2d_with_options(
    inst: &ProblemInstance2D,
    options: &SolveOptions,
) -> Result<SolveReport2D> {
    let mode = options.selector;
    let order = inst.order;
    let n = order as i64;
    let shape = Spectrum2D::from_fn(order, |_, _| Complex64::new(0.0, 0.0));
    let top = (n, n);
    let bottom = (-n, -n);
    let peak = inst.coeff_magnitudes.iter().copied().fold(0.0, f64::max);
    let anchor_floor = ANCHOR_TOLERANCE * peak;
    for idx in [top, bottom] {
        let m = inst.coeff_magnitudes[shape.slot(idx.0, idx.1)];
        if m <= anchor_floor || m == 0.0 {
            return Err(Error::AnchorFailure { index: idx });
        }
    }

    let autocorr = inst.autocorr();
    let mut flags = Vec::new();
    let mut phases = vec![None; shape.values().len()];
    let top_phase = wrap_phase(inst.gauge_phase.arg());
    phases[shape.slot(n, n)] = Some(top_phase);
    if order > 0 {
        let b_top = autocorr.get(2 * n, 2 * n);
        let expected =
            inst.coeff_magnitudes[shape.slot(n, n)] * inst.coeff_magnitudes[shape.slot(-n, -n)];
        let measured = b_top.norm();
        if (measured - expected).abs() > TOP_ROW_TOLERANCE * expected || measured == 0.0 {
            flags.push(ConsistencyFlag::InconsistentTop { expected, measured });
        }
        let bottom_phase = if measured > 0.0 {
            wrap_phase(top_phase - b_top.arg())
        } else {
            top_phase
        };
        phases[shape.slot(-n, -n)] = Some(bottom_phase);
    }

    let coeffs: Vec<Complex64> = (0..phases.len())
        .map(|slot| {
            let idx = shape.index_of(slot);
            let phase = phases[slot].unwrap_or(inst.placeholder_phase(idx));
            Complex64::from_polar(inst.coeff_magnitudes[slot], phase)
        })
        .collect();
    let energy = autocorr.values().iter().map(|b| b.norm_sqr()).sum::<f64>();
    let selector = Selector::new(
        Layout2D { order },
        mode,
        autocorr.values().to_vec(),
        0.0,
        coeffs,
    );
    let walk = Walk::new(
        selector,
        inst.coeff_magnitudes.clone(),
        phases,
        flags,
        energy,
    );

    let mut rec = Recursion2D {
        inst,
        shape,
        autocorr,
        pairs: pair_order(order),
        walk,
        ordering_checks: 0,
    };
    let stats = search(&mut rec, options);
    rec.finish(stats, options.polish)
}
