//! Centered finite Fourier transforms and autocorrelation spectra.
//!
//! Every sequence in this crate lives on a [`Grid`] of length `M` and is
//! addressed by a signed *logical* index. Storage is dense; the one mapping
//! between the two is
//!
//! ```text
//! offset = l + floor(M / 2)
//! ```
//!
//! so odd grids cover `-(M-1)/2 ..= (M-1)/2` and even grids cover
//! `-M/2 ..= M/2 - 1`.
//!
//! The transform pair is
//!
//! ```text
//! F(k) = sum_l a_l exp(+2 pi i l k / M)
//! a_l  = (1/M) sum_k F(k) exp(-2 pi i l k / M)
//! ```
//!
//! evaluated by direct summation against a twiddle table.

use std::f64::consts::TAU;
use std::ops::RangeInclusive;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold separating genuine out-of-support energy from round-off.
pub const SUPPORT_TOLERANCE: f64 = 1e-8;

/// A centered finite grid of `len` points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    len: usize,
}

impl Grid {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyGrid);
        }
        Ok(Self { len })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn lo(&self) -> i64 {
        -((self.len / 2) as i64)
    }

    #[inline]
    pub fn hi(&self) -> i64 {
        self.lo() + self.len as i64 - 1
    }

    pub fn indices(&self) -> RangeInclusive<i64> {
        self.lo()..=self.hi()
    }

    #[inline]
    pub fn contains(&self, l: i64) -> bool {
        l >= self.lo() && l <= self.hi()
    }

    /// Storage offset of logical index `l`; `None` off the grid.
    #[inline]
    pub fn offset(&self, l: i64) -> Option<usize> {
        self.contains(l).then(|| (l - self.lo()) as usize)
    }

    /// Storage offset of `l` reduced modulo the grid length.
    #[inline]
    pub fn wrapped_offset(&self, l: i64) -> usize {
        (l - self.lo()).rem_euclid(self.len as i64) as usize
    }

    #[inline]
    pub fn index_at(&self, offset: usize) -> i64 {
        self.lo() + offset as i64
    }
}

/// Closed window `[s0, s1]` of logical indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Support {
    pub s0: i64,
    pub s1: i64,
}

impl Support {
    pub fn new(s0: i64, s1: i64) -> Self {
        assert!(s0 <= s1, "empty support window [{s0}, {s1}]");
        Self { s0, s1 }
    }

    /// `[-n/2, n/2 - 1]`, the centered window of `n` coefficients.
    pub fn centered(n: usize) -> Self {
        assert!(n > 0);
        let s0 = -((n / 2) as i64);
        Self::new(s0, s0 + n as i64 - 1)
    }

    #[inline]
    pub fn len(&self) -> usize {
        (self.s1 - self.s0 + 1) as usize
    }

    #[inline]
    pub fn contains(&self, l: i64) -> bool {
        l >= self.s0 && l <= self.s1
    }

    pub fn indices(&self) -> RangeInclusive<i64> {
        self.s0..=self.s1
    }

    pub fn fits(&self, grid: Grid) -> bool {
        grid.contains(self.s0) && grid.contains(self.s1)
    }

    /// Whether the autocorrelation of this support fits on `grid` without aliasing.
    pub fn oversampled_on(&self, grid: Grid) -> bool {
        2 * self.len() - 1 <= grid.len()
    }
}

/// Table of `exp(2 pi i n / M)` for `n` in `0..M`.
#[derive(Debug, Clone)]
pub struct Twiddles {
    table: Vec<Complex64>,
}

impl Twiddles {
    pub fn new(grid: Grid) -> Self {
        let m = grid.len() as f64;
        let table = (0..grid.len())
            .map(|n| Complex64::from_polar(1.0, TAU * n as f64 / m))
            .collect();
        Self { table }
    }

    /// `exp(2 pi i l k / M)`.
    #[inline]
    pub fn at(&self, l: i64, k: i64) -> Complex64 {
        let m = self.table.len() as i64;
        self.table[(l.rem_euclid(m) * k.rem_euclid(m) % m) as usize]
    }
}

/// Complex coefficients on a grid, exactly zero outside `support`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteredSpectrum {
    grid: Grid,
    support: Support,
    coeffs: Vec<Complex64>,
}

impl CenteredSpectrum {
    /// Builds a spectrum from the values on `support`, in index order.
    pub fn from_support(grid: Grid, support: Support, values: &[Complex64]) -> Result<Self> {
        if !support.fits(grid) {
            return Err(Error::SupportOutsideGrid {
                s0: support.s0,
                s1: support.s1,
                grid_len: grid.len(),
            });
        }
        if values.len() != support.len() {
            return Err(Error::LengthMismatch {
                expected: support.len(),
                actual: values.len(),
            });
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
        let start = grid.offset(support.s0).unwrap();
        coeffs[start..start + values.len()].copy_from_slice(values);
        Ok(Self {
            grid,
            support,
            coeffs,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn support(&self) -> Support {
        self.support
    }

    /// Coefficient at logical index `l`; zero off the grid.
    pub fn get(&self, l: i64) -> Complex64 {
        self.grid
            .offset(l)
            .map_or(Complex64::new(0.0, 0.0), |o| self.coeffs[o])
    }

    /// Values over the full grid, lowest index first.
    pub fn dense(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Values over the support window, lowest index first.
    pub fn support_values(&self) -> &[Complex64] {
        let start = self.grid.offset(self.support.s0).unwrap();
        &self.coeffs[start..start + self.support.len()]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.support_values().iter().map(|a| a.norm_sqr()).sum()
    }

    /// Every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            grid: self.grid,
            support: self.support,
            coeffs: self.coeffs.iter().map(|a| a * factor).collect(),
        }
    }
}

/// Samples `F(k)` over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl SampledField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, k: i64) -> Complex64 {
        self.values[self.grid.offset(k).expect("sample index off grid")]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|f| f.norm()).collect()
    }

    pub fn magnitudes_sqr(&self) -> Vec<f64> {
        self.values.iter().map(|f| f.norm_sqr()).collect()
    }
}

/// Fourier coefficients `b_j` of a squared magnitude `|F|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrSpectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl AutocorrSpectrum {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn get(&self, lag: i64) -> Complex64 {
        self.grid
            .offset(lag)
            .map_or(Complex64::new(0.0, 0.0), |o| self.coeffs[o])
    }

    pub fn dense(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|b| b.norm_sqr()).sum()
    }
}

pub fn forward_dft(spec: &CenteredSpectrum) -> SampledField {
    let grid = spec.grid();
    let tw = Twiddles::new(grid);
    let support = spec.support();
    let values = grid
        .indices()
        .map(|k| {
            support
                .indices()
                .zip(spec.support_values())
                .map(|(l, a)| a * tw.at(l, k))
                .sum()
        })
        .collect();
    SampledField { grid, values }
}

/// Inverse transform, keeping only `support`.
///
/// Fails with [`Error::SupportViolation`] when a coefficient outside the
/// window exceeds [`SUPPORT_TOLERANCE`] times the largest coefficient.
pub fn inverse_dft(field: &SampledField, support: Support) -> Result<CenteredSpectrum> {
    let grid = field.grid();
    if !support.fits(grid) {
        return Err(Error::SupportOutsideGrid {
            s0: support.s0,
            s1: support.s1,
            grid_len: grid.len(),
        });
    }
    let tw = Twiddles::new(grid);
    let scale = 1.0 / grid.len() as f64;
    let all: Vec<Complex64> = grid
        .indices()
        .map(|l| {
            grid.indices()
                .zip(field.values())
                .map(|(k, f)| f * tw.at(l, k).conj())
                .sum::<Complex64>()
                * scale
        })
        .collect();

    let peak = all.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let tolerance = SUPPORT_TOLERANCE * peak;
    if let Some((offset, a)) = all
        .iter()
        .enumerate()
        .filter(|(o, _)| !support.contains(grid.index_at(*o)))
        .find(|(_, a)| a.norm() > tolerance)
    {
        return Err(Error::SupportViolation {
            index: grid.index_at(offset),
            magnitude: a.norm(),
            tolerance,
        });
    }
    let start = grid.offset(support.s0).unwrap();
    CenteredSpectrum::from_support(grid, support, &all[start..start + support.len()])
}

/// Autocorrelation spectrum from squared field magnitudes.
///
/// Whenever the coefficient support satisfies `2S - 1 <= M`, the result is
/// free of aliasing and equals [`convolve_direct`] of the coefficients.
pub fn autocorr_from_magnitude(mag_sq: &[f64]) -> Result<AutocorrSpectrum> {
    let grid = Grid::new(mag_sq.len())?;
    let tw = Twiddles::new(grid);
    let scale = 1.0 / grid.len() as f64;
    let coeffs = grid
        .indices()
        .map(|j| {
            grid.indices()
                .zip(mag_sq)
                .map(|(k, &p)| tw.at(j, k).conj() * p)
                .sum::<Complex64>()
                * scale
        })
        .collect();
    Ok(AutocorrSpectrum { grid, coeffs })
}

/// `b_l = sum_j a_j conj(a_{j-l})` by explicit double sum.
///
/// Lags are placed cyclically on the spectrum's grid, so the result is the
/// linear autocorrelation whenever the support is oversampled.
pub fn convolve_direct(spec: &CenteredSpectrum) -> AutocorrSpectrum {
    let grid = spec.grid();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    let support = spec.support();
    let values = spec.support_values();
    for (j, aj) in support.indices().zip(values) {
        for (i, ai) in support.indices().zip(values) {
            coeffs[grid.wrapped_offset(j - i)] += aj * ai.conj();
        }
    }
    AutocorrSpectrum { grid, coeffs }
}
