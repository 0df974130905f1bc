//! Depth-first search over the branch choices of a recursion.
//!
//! Every step offers two mirror candidates. The closest-point distance
//! decides which one is tried first; a candidate whose triangle cannot be
//! closed, or that leaves some row unreachable by the products still
//! unresolved, is not tried at all, and a complete assignment is accepted only if
//! it reproduces every autocorrelation row. When no such assignment turns up
//! within the node budget, the plain greedy path is reported instead.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::engine1d::{BranchRecord, ConsistencyFlag};
use crate::selector::{Candidate, Layout, Selector, SelectorState};
use crate::triangle::{wrap_phase, TriangleSolution};

/// Triangle residual, relative to the side lengths, up to which a branch is
/// still explored.
pub const VIABILITY_TOLERANCE: f64 = 1e-6;
/// Slack, relative to the row's total product magnitude, allowed when
/// checking that a row is still reachable.
pub const REACH_TOLERANCE: f64 = 1e-6;
/// Final `sum |c - b|^2`, relative to `sum |b|^2`, accepted as exact.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-12;
/// Default node budget per recursion step.
pub const SEARCH_BUDGET_PER_STEP: usize = 1024;
/// Phase difference below which the two branches count as one.
pub const SAME_BRANCH_TOLERANCE: f64 = 1e-8;

/// Which assignment a solve reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchPath {
    /// Reproduces every row.
    Verified,
    /// The complete path with the smallest residual met during the search.
    ClosestLeaf,
    /// The greedy closest-point path.
    #[default]
    Greedy,
}

/// How the branch search ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SearchStats {
    /// Steps expanded, counting revisits after backtracking.
    pub expanded: usize,
    /// Candidates abandoned after having been committed.
    pub backtracks: usize,
    /// Complete assignments reached.
    pub leaves: usize,
    pub path: SearchPath,
}

impl SearchStats {
    pub fn verified(&self) -> bool {
        self.path == SearchPath::Verified
    }
}

/// Solver settings shared by both engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    pub selector: crate::selector::SelectorMode,
    /// Backtrack over branch choices; when off, only the greedy path is built.
    pub search: bool,
    pub budget_per_step: usize,
    /// Refine the phases of a verified path against every row.
    pub polish: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            selector: crate::selector::SelectorMode::Incremental,
            search: true,
            budget_per_step: SEARCH_BUDGET_PER_STEP,
            polish: true,
        }
    }
}

impl SolveOptions {
    pub fn greedy(selector: crate::selector::SelectorMode) -> Self {
        Self {
            selector,
            search: false,
            ..Self::default()
        }
    }
}

/// Both candidates of one step, as slot assignments.
pub(crate) struct Proposal<I> {
    pub step: usize,
    pub indices: (I, I),
    /// `None` for a degenerate step that fell back to placeholders.
    pub solution: Option<TriangleSolution>,
    /// Side-length sum of the triangle, the scale of its residuals.
    pub scale: f64,
    pub branches: [Vec<(usize, f64)>; 2],
}

pub(crate) struct Ranked<I> {
    proposal: Proposal<I>,
    candidates: [Candidate; 2],
    bounds: [RowBounds; 2],
    reachable: [bool; 2],
    preferred: usize,
    tie: bool,
}

impl<I> Ranked<I> {
    /// Branch favoured by the closest-point criterion.
    pub fn preferred(&self) -> usize {
        self.preferred
    }

    /// Branches worth exploring, preferred first. On the last step every
    /// row is complete and the leaf residual judges it instead.
    fn options(&self, last: bool) -> Vec<usize> {
        let first = self.preferred;
        let second = 1 - first;
        let Some(sol) = &self.proposal.solution else {
            return if last || self.reachable[first] {
                vec![first]
            } else {
                Vec::new()
            };
        };
        let limit = VIABILITY_TOLERANCE * self.proposal.scale.max(f64::MIN_POSITIVE);
        let viable = |b: usize| sol.branches[b].residual <= limit && (last || self.reachable[b]);
        let same = self.proposal.branches[0]
            .iter()
            .zip(&self.proposal.branches[1])
            .all(|(x, y)| {
                wrap_phase(x.1 - y.1).min(wrap_phase(y.1 - x.1)) <= SAME_BRANCH_TOLERANCE
            });
        let mut out = Vec::with_capacity(2);
        if viable(first) {
            out.push(first);
        }
        if viable(second) && !same {
            out.push(second);
        }
        out
    }
}

/// Per-row sums of the resolved products, and the most the unresolved
/// products can still add.
#[derive(Clone)]
struct RowBounds {
    values: Vec<Option<Complex64>>,
    known: Vec<Complex64>,
    slack: Vec<f64>,
}

impl RowBounds {
    fn new<L: Layout>(layout: &L, moduli: &[f64], phases: &[Option<f64>]) -> Self {
        let lags = layout.lag_count();
        let mut bounds = Self {
            values: vec![None; moduli.len()],
            known: vec![Complex64::new(0.0, 0.0); lags],
            slack: vec![0.0; lags],
        };
        for (p, &mp) in moduli.iter().enumerate() {
            for (q, &mq) in moduli.iter().enumerate() {
                bounds.slack[layout.lag_of(p, q)] += mp * mq;
            }
        }
        for (p, phase) in phases.iter().enumerate() {
            if let Some(ph) = phase {
                bounds.resolve(layout, moduli, p, Complex64::from_polar(moduli[p], *ph));
            }
        }
        bounds
    }

    /// Moves every product of slot `p` with a resolved slot into `known`.
    fn resolve<L: Layout>(&mut self, layout: &L, moduli: &[f64], p: usize, value: Complex64) {
        debug_assert!(self.values[p].is_none());
        self.values[p] = Some(value);
        for (q, vq) in self.values.iter().enumerate() {
            let Some(vq) = *vq else { continue };
            let (pq, qp) = (layout.lag_of(p, q), layout.lag_of(q, p));
            self.known[pq] += value * vq.conj();
            self.slack[pq] -= moduli[p] * moduli[q];
            if q != p {
                self.known[qp] += vq * value.conj();
                self.slack[qp] -= moduli[p] * moduli[q];
            }
        }
    }

    /// Whether every row can still be met, up to `tolerance[lag]`.
    fn reachable(&self, target: &[Complex64], tolerance: &[f64]) -> bool {
        self.known
            .iter()
            .zip(&self.slack)
            .zip(target.iter().zip(tolerance))
            .all(|((k, slack), (b, tol))| (b - k).norm() <= slack.max(0.0) + tol)
    }
}

/// Mutable state shared by the 1D and 2D recursions.
pub(crate) struct Walk<L: Layout, I> {
    pub selector: Selector<L>,
    pub moduli: Vec<f64>,
    pub phases: Vec<Option<f64>>,
    pub branch_log: Vec<BranchRecord<I>>,
    pub flags: Vec<ConsistencyFlag>,
    bounds: RowBounds,
    reach_tolerance: Vec<f64>,
    tie_tolerance: f64,
    energy: f64,
}

pub(crate) struct Saved<I> {
    selector: SelectorState,
    bounds: RowBounds,
    phases: Vec<Option<f64>>,
    log_len: usize,
    flags_len: usize,
    _index: std::marker::PhantomData<I>,
}

impl<L: Layout, I: Clone> Walk<L, I> {
    /// `energy` is `sum |b|^2` over the measured rows.
    pub fn new(
        selector: Selector<L>,
        moduli: Vec<f64>,
        phases: Vec<Option<f64>>,
        flags: Vec<ConsistencyFlag>,
        energy: f64,
    ) -> Self {
        let layout = selector.layout();
        let totals = RowBounds::new(layout, &moduli, &vec![None; moduli.len()]).slack;
        let floor = 1e-12 * totals.iter().copied().fold(0.0, f64::max);
        let reach_tolerance = totals.iter().map(|t| REACH_TOLERANCE * t + floor).collect();
        let bounds = RowBounds::new(layout, &moduli, &phases);
        Self {
            selector,
            moduli,
            phases,
            branch_log: Vec::new(),
            flags,
            bounds,
            reach_tolerance,
            tie_tolerance: crate::engine1d::TIE_TOLERANCE * energy,
            energy,
        }
    }

    pub fn value(&self, slot: usize) -> Complex64 {
        Complex64::from_polar(self.moduli[slot], self.phases[slot].expect("slot resolved"))
    }

    pub fn rank(&self, proposal: Proposal<I>) -> Ranked<I> {
        let changes = |assignment: &[(usize, f64)]| -> Vec<(usize, Complex64)> {
            assignment
                .iter()
                .map(|&(slot, phase)| (slot, Complex64::from_polar(self.moduli[slot], phase)))
                .collect()
        };
        let candidates = [
            self.selector.evaluate(&changes(&proposal.branches[0])),
            self.selector.evaluate(&changes(&proposal.branches[1])),
        ];
        let bounds = proposal.branches.clone().map(|assignment| {
            let mut bounds = self.bounds.clone();
            for (slot, phase) in assignment {
                let layout = self.selector.layout();
                bounds.resolve(
                    layout,
                    &self.moduli,
                    slot,
                    Complex64::from_polar(self.moduli[slot], phase),
                );
            }
            bounds
        });
        let target = self.selector.target();
        let reachable = [
            bounds[0].reachable(target, &self.reach_tolerance),
            bounds[1].reachable(target, &self.reach_tolerance),
        ];
        let (d1, d2) = (candidates[0].distance, candidates[1].distance);
        let tie = (d1 - d2).abs() <= self.tie_tolerance;
        let preferred = if d1 <= d2 || tie { 0 } else { 1 };
        Ranked {
            proposal,
            candidates,
            bounds,
            reachable,
            preferred,
            tie,
        }
    }

    /// Commits branch `branch` (0 or 1) of a ranked step.
    pub fn commit(&mut self, ranked: &Ranked<I>, branch: usize) -> BranchRecord<I> {
        let p = &ranked.proposal;
        match &p.solution {
            None => self
                .flags
                .push(ConsistencyFlag::Degenerate { step: p.step }),
            Some(sol) if !sol.feasible => self.flags.push(ConsistencyFlag::Clamped {
                step: p.step,
                residual: sol.branches[branch].residual,
            }),
            _ => {}
        }
        if ranked.tie {
            self.flags.push(ConsistencyFlag::Tie { step: p.step });
        }
        for &(slot, phase) in &p.branches[branch] {
            self.phases[slot] = Some(wrap_phase(phase));
        }
        self.selector.accept(ranked.candidates[branch].clone());
        self.bounds = ranked.bounds[branch].clone();
        let (d1, d2) = (ranked.candidates[0].distance, ranked.candidates[1].distance);
        let record = BranchRecord {
            step: p.step,
            indices: p.indices.clone(),
            branch: branch as u8 + 1,
            gap: d2 - d1,
            tie: ranked.tie,
        };
        self.branch_log.push(record.clone());
        record
    }

    pub fn save(&self) -> Saved<I> {
        Saved {
            selector: self.selector.save(),
            bounds: self.bounds.clone(),
            phases: self.phases.clone(),
            log_len: self.branch_log.len(),
            flags_len: self.flags.len(),
            _index: std::marker::PhantomData,
        }
    }

    pub fn restore(&mut self, saved: &Saved<I>) {
        self.selector.restore(&saved.selector);
        self.bounds.clone_from(&saved.bounds);
        self.phases.clone_from(&saved.phases);
        self.branch_log.truncate(saved.log_len);
        self.flags.truncate(saved.flags_len);
    }

    /// Whether a residual counts as reproducing every row.
    pub fn consistent(&self, distance: f64) -> bool {
        distance <= CONSISTENCY_TOLERANCE * self.energy
    }
}

/// A recursion whose steps can be proposed one at a time.
pub(crate) trait Stepwise {
    type Index: Clone;
    type Layout: Layout;

    fn walk(&self) -> &Walk<Self::Layout, Self::Index>;
    fn walk_mut(&mut self) -> &mut Walk<Self::Layout, Self::Index>;
    fn step_count(&self) -> usize;
    /// Both candidates of step `s`; steps `1..s` must be committed.
    fn propose(&mut self, s: usize) -> Proposal<Self::Index>;
}

struct Frame<I> {
    saved: Saved<I>,
    ranked: Ranked<I>,
    options: Vec<usize>,
    next: usize,
}

fn greedy<R: Stepwise>(rec: &mut R) {
    for s in 1..=rec.step_count() {
        let proposal = rec.propose(s);
        let ranked = rec.walk().rank(proposal);
        let preferred = ranked.preferred;
        rec.walk_mut().commit(&ranked, preferred);
    }
}

/// A complete assignment kept as a fallback.
struct Leaf<I> {
    saved: Saved<I>,
    branch_log: Vec<BranchRecord<I>>,
    flags: Vec<ConsistencyFlag>,
    distance: f64,
}

/// Walks the branch tree depth first and stops at the first assignment that
/// reproduces every row. Otherwise reports whichever of the closest complete
/// path and the greedy path has the smaller residual. Either way the
/// recursion ends fully committed.
pub(crate) fn search<R: Stepwise>(rec: &mut R, options: &SolveOptions) -> SearchStats {
    let steps = rec.step_count();
    let mut stats = SearchStats::default();
    if !options.search {
        greedy(rec);
        let walk = rec.walk();
        if walk.consistent(walk.selector.distance()) {
            stats.path = SearchPath::Verified;
        }
        return stats;
    }

    let budget = options
        .budget_per_step
        .saturating_mul(steps)
        .saturating_add(64);
    let root = rec.walk().save();
    let mut best: Option<Leaf<R::Index>> = None;
    let mut frames: Vec<Frame<R::Index>> = Vec::new();
    let mut s = 1;

    loop {
        if s > steps {
            stats.leaves += 1;
            let walk = rec.walk();
            let distance = walk.selector.distance();
            if walk.consistent(distance) {
                stats.path = SearchPath::Verified;
                return stats;
            }
            if best.as_ref().is_none_or(|b| distance < b.distance) {
                best = Some(Leaf {
                    saved: walk.save(),
                    branch_log: walk.branch_log.clone(),
                    flags: walk.flags.clone(),
                    distance,
                });
            }
        } else if stats.expanded < budget {
            stats.expanded += 1;
            let proposal = rec.propose(s);
            let ranked = rec.walk().rank(proposal);
            let options = ranked.options(s == steps);
            frames.push(Frame {
                saved: rec.walk().save(),
                ranked,
                options,
                next: 0,
            });
        } else {
            break;
        }

        // Take the next untried option, unwinding exhausted frames.
        let mut advanced = false;
        while let Some(frame) = frames.last_mut() {
            if frame.next < frame.options.len() {
                if frame.next > 0 {
                    stats.backtracks += 1;
                }
                let branch = frame.options[frame.next];
                frame.next += 1;
                let walk = rec.walk_mut();
                walk.restore(&frame.saved);
                walk.commit(&frame.ranked, branch);
                s = frame.ranked.proposal.step + 1;
                advanced = true;
                break;
            }
            frames.pop();
        }
        if !advanced {
            break;
        }
    }

    rec.walk_mut().restore(&root);
    greedy(rec);
    let walk = rec.walk_mut();
    let greedy_distance = walk.selector.distance();
    stats.path = SearchPath::Greedy;
    if let Some(leaf) = best.filter(|b| b.distance < greedy_distance) {
        walk.restore(&leaf.saved);
        walk.branch_log = leaf.branch_log;
        walk.flags = leaf.flags;
        stats.path = SearchPath::ClosestLeaf;
    } else if walk.consistent(greedy_distance) {
        stats.path = SearchPath::Verified;
    }
    stats
}
