//! Ground truth for testing the recursion: forward instance generation,
//! exhaustive phase-grid search on tiny supports, and error metrics that
//! factor out the global phase.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine1d::{Layout1D, ProblemInstance1D};
use crate::engine2d::{forward_dft_2d, ProblemInstance2D, Spectrum2D};
use crate::error::{Error, Result};
use crate::selector::Layout;
use crate::spectral::{
    convolve_direct, forward_dft, inverse_dft, CenteredSpectrum, Grid, SampledField, Support,
};

/// Samples of the reference waveform.
pub const PAPER_H_SAMPLES: usize = 399;
/// Spacing of the reference waveform samples, starting at `t = 0`.
pub const PAPER_H_SPACING: f64 = 0.01;
/// Coefficients kept after truncating the reference spectrum.
pub const PAPER_H_SUPPORT: usize = 200;

/// Default cap on the number of grid points `G^R` visited by [`brute_force_solve`].
pub const BRUTE_FORCE_BUDGET: u64 = 1 << 30;

/// `sin(x) / x`, with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// The reference test waveform
/// `2 exp(-(t-2)^2/0.6 + 2it + 0.2(it-1)^2) (1.5 + 2 sin(5 pi t) + 0.5i sin(2 pi t)
///  + sinc(t - pi) + 3i sinc(t - 2)) + sin(t^2)`.
pub fn paper_h(t: f64) -> Complex64 {
    let i = Complex64::i();
    let it_minus_1 = i * t - 1.0;
    let exponent = -(t - 2.0).powi(2) / 0.6 + 2.0 * i * t + 0.2 * it_minus_1 * it_minus_1;
    let envelope = 2.0 * exponent.exp();
    let carrier = 1.5
        + 2.0 * (5.0 * PI * t).sin()
        + 0.5 * i * (2.0 * PI * t).sin()
        + sinc(t - PI)
        + 3.0 * i * sinc(t - 2.0);
    envelope * carrier + (t * t).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    PaperH,
    RandomSmooth,
    RandomUniform,
    OneSided,
    CustomCoeffs,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PaperH => "paper-h",
            Self::RandomSmooth => "random-smooth",
            Self::RandomUniform => "random-uniform",
            Self::OneSided => "one-sided",
            Self::CustomCoeffs => "custom-coeffs",
        }
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "paper-h" => Self::PaperH,
            "random-smooth" => Self::RandomSmooth,
            "random-uniform" => Self::RandomUniform,
            "one-sided" => Self::OneSided,
            "custom-coeffs" => Self::CustomCoeffs,
            other => return Err(format!("unknown generator kind '{other}'")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Support length `S`; ignored by [`GeneratorKind::PaperH`].
    pub size: usize,
    /// Grid length; defaults to `2S - 1`.
    pub grid_len: Option<usize>,
    pub seed: u64,
    /// Amplitude of additive uniform `[0, 1)` noise on the field samples.
    pub noise: f64,
    /// Lower bound for random coefficient moduli.
    pub min_modulus: f64,
    /// Spectrum for [`GeneratorKind::CustomCoeffs`].
    pub custom: Option<CenteredSpectrum>,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, size: usize, seed: u64) -> Self {
        Self {
            kind,
            size,
            grid_len: None,
            seed,
            noise: 0.0,
            min_modulus: 0.1,
            custom: None,
        }
    }

    pub fn paper_h() -> Self {
        Self::new(GeneratorKind::PaperH, PAPER_H_SUPPORT, 0)
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_grid_len(mut self, grid_len: usize) -> Self {
        self.grid_len = Some(grid_len);
        self
    }

    pub fn with_min_modulus(mut self, min_modulus: f64) -> Self {
        self.min_modulus = min_modulus;
        self
    }

    pub fn custom(spectrum: CenteredSpectrum) -> Self {
        let mut spec = Self::new(GeneratorKind::CustomCoeffs, spectrum.support().len(), 0);
        spec.grid_len = Some(spectrum.grid().len());
        spec.custom = Some(spectrum);
        spec
    }
}

/// Recorded alongside generated instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMetadata {
    pub kind: GeneratorKind,
    pub seed: u64,
    pub noise: f64,
    /// Always `"unnormalized"`: `sinc(x) = sin(x) / x`.
    pub sinc: String,
    /// Sample position `t = t0 + dt * (k - k_lo)`, when the grid has a physical axis.
    pub axis: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInstance {
    pub truth: CenteredSpectrum,
    pub instance: ProblemInstance1D,
    pub metadata: GeneratorMetadata,
}

fn random_phase_spectrum(
    rng: &mut ChaCha8Rng,
    grid: Grid,
    support: Support,
    min_modulus: f64,
) -> Result<CenteredSpectrum> {
    let values: Vec<Complex64> = (0..support.len())
        .map(|_| {
            let m = rng.gen_range(min_modulus..=1.0);
            Complex64::from_polar(m, rng.gen_range(0.0..TAU))
        })
        .collect();
    CenteredSpectrum::from_support(grid, support, &values)
}

fn smooth_spectrum(
    rng: &mut ChaCha8Rng,
    grid: Grid,
    support: Support,
    min_modulus: f64,
) -> Result<CenteredSpectrum> {
    let phase_amps: Vec<(f64, f64)> = (1..=3)
        .map(|m| (rng.gen_range(-PI..PI) / m as f64, rng.gen_range(0.0..TAU)))
        .collect();
    let env_shifts: [f64; 2] = [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)];
    let len = support.len() as f64;
    let values: Vec<Complex64> = (0..support.len())
        .map(|p| {
            let t = p as f64 / len;
            let phase: f64 = phase_amps
                .iter()
                .enumerate()
                .map(|(m, (amp, shift))| amp * (TAU * (m + 1) as f64 * t + shift).sin())
                .sum();
            let envelope = 0.5
                + 0.25 * (TAU * t + env_shifts[0]).cos()
                + 0.25 * (2.0 * TAU * t + env_shifts[1]).cos();
            Complex64::from_polar(min_modulus + (1.0 - min_modulus) * envelope, phase)
        })
        .collect();
    CenteredSpectrum::from_support(grid, support, &values)
}

/// Spectrum of the reference waveform, truncated to the 200 lowest frequencies.
pub fn paper_h_spectrum() -> Result<CenteredSpectrum> {
    let grid = Grid::new(PAPER_H_SAMPLES)?;
    let samples = paper_h_samples(grid)?;
    let full = inverse_dft(&samples, Support::new(grid.lo(), grid.hi()))?;
    let support = Support::centered(PAPER_H_SUPPORT);
    let kept: Vec<Complex64> = support.indices().map(|l| full.get(l)).collect();
    CenteredSpectrum::from_support(grid, support, &kept)
}

fn paper_h_samples(grid: Grid) -> Result<SampledField> {
    let values = (0..grid.len())
        .map(|n| paper_h(PAPER_H_SPACING * n as f64))
        .collect();
    SampledField::new(grid, values)
}

/// Measures magnitudes of `field + noise * U[0, 1)` on `support`.
fn measure(
    truth: &CenteredSpectrum,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ProblemInstance1D> {
    if noise == 0.0 {
        return ProblemInstance1D::from_spectrum(truth);
    }
    let grid = truth.grid();
    let clean = forward_dft(truth);
    let noisy: Vec<Complex64> = clean
        .values()
        .iter()
        .map(|f| f + noise * rng.gen_range(0.0..1.0))
        .collect();
    let noisy = SampledField::new(grid, noisy)?;
    let spectrum = inverse_dft(&noisy, Support::new(grid.lo(), grid.hi()))?;
    let support = truth.support();
    let moduli = support.indices().map(|l| spectrum.get(l).norm()).collect();
    ProblemInstance1D::new(grid, noisy.magnitudes(), support, moduli)
}

/// Builds a ground-truth spectrum and the magnitudes measured from it.
pub fn generate(spec: &GeneratorSpec) -> Result<GeneratedInstance> {
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "noise must be >= 0, got {}",
            spec.noise
        )));
    }
    if spec.kind != GeneratorKind::PaperH
        && spec.kind != GeneratorKind::CustomCoeffs
        && spec.size == 0
    {
        return Err(Error::InvalidSpec("size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&spec.min_modulus) {
        return Err(Error::InvalidSpec("min modulus must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let default_grid = || Grid::new(spec.grid_len.unwrap_or(2 * spec.size - 1));
    let mut axis = None;
    let truth = match spec.kind {
        GeneratorKind::PaperH => {
            axis = Some((0.0, PAPER_H_SPACING));
            paper_h_spectrum()?
        }
        GeneratorKind::RandomUniform => random_phase_spectrum(
            &mut rng,
            default_grid()?,
            Support::centered(spec.size),
            spec.min_modulus,
        )?,
        GeneratorKind::RandomSmooth => smooth_spectrum(
            &mut rng,
            default_grid()?,
            Support::centered(spec.size),
            spec.min_modulus,
        )?,
        GeneratorKind::OneSided => random_phase_spectrum(
            &mut rng,
            default_grid()?,
            Support::new(0, spec.size as i64 - 1),
            spec.min_modulus,
        )?,
        GeneratorKind::CustomCoeffs => spec
            .custom
            .clone()
            .ok_or_else(|| Error::InvalidSpec("custom kind needs coefficients".into()))?,
    };
    let instance = measure(&truth, spec.noise, &mut rng)?;
    Ok(GeneratedInstance {
        truth,
        instance,
        metadata: GeneratorMetadata {
            kind: spec.kind,
            seed: spec.seed,
            noise: spec.noise,
            sinc: "unnormalized".into(),
            axis,
        },
    })
}

/// Random `(2N+1)^2` spectrum with moduli in `[min_modulus, 1]` and its
/// noiseless instance on an `M x M` grid, `M = 4N + 1` unless given.
pub fn generate_2d(
    order: usize,
    grid_len: Option<usize>,
    seed: u64,
    min_modulus: f64,
) -> Result<(Spectrum2D, ProblemInstance2D)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = Spectrum2D::from_fn(order, |_, _| {
        let m = rng.gen_range(min_modulus..=1.0);
        Complex64::from_polar(m, rng.gen_range(0.0..TAU))
    });
    let grid = Grid::new(grid_len.unwrap_or(4 * order + 1))?;
    let inst = ProblemInstance2D::from_spectrum(&truth, grid)?;
    Ok((truth, inst))
}

/// Best assignment found on the phase grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub spectrum: CenteredSpectrum,
    /// Phase per support slot, `2 pi g / G` for integer `g`.
    pub phases: Vec<f64>,
    /// `sum |c - b|^2` over the autocorrelation rows of the support.
    pub residual: f64,
}

/// Exhaustive search over `G` phases per free coefficient.
///
/// The top slot carries the gauge; the remaining `S - 1` phases are searched.
/// For each setting of all but the lowest slot, the residual is a degree-2
/// trigonometric polynomial in the lowest slot's phase, so that coordinate is
/// swept by evaluating the polynomial rather than the full sum.
pub fn brute_force_solve(
    inst: &ProblemInstance1D,
    grid_points: usize,
    budget: u64,
) -> Result<BruteForceResult> {
    let support = inst.support();
    let len = support.len();
    let free = len - 1;
    let space = (grid_points as f64).powi(free as i32);
    if space > budget as f64 || grid_points == 0 {
        return Err(Error::TooLarge {
            size: space,
            budget,
        });
    }
    let moduli = inst.coeff_magnitudes().to_vec();
    let gauge = inst.gauge_phase().arg();
    let layout = Layout1D { len };
    let b = inst.autocorr();
    let span = len as i64 - 1;
    let target: Vec<Complex64> = (-span..=span).map(|lag| b.get(lag)).collect();
    let step = TAU / grid_points as f64;
    let units: Vec<Complex64> = (0..grid_points)
        .map(|g| Complex64::cis(step * g as f64))
        .collect();
    // cos t, sin t, cos 2t, sin 2t per grid phase.
    let table: Vec<[f64; 4]> = units
        .iter()
        .map(|e| {
            let ee = e * e;
            [e.re, e.im, ee.re, ee.im]
        })
        .collect();

    let finish = |digits: Vec<usize>, residual: f64| -> Result<BruteForceResult> {
        let mut phases: Vec<f64> = digits.iter().map(|&g| step * g as f64).collect();
        phases.push(crate::triangle::wrap_phase(gauge));
        let values: Vec<Complex64> = moduli
            .iter()
            .zip(&phases)
            .map(|(&m, &ph)| Complex64::from_polar(m, ph))
            .collect();
        Ok(BruteForceResult {
            spectrum: CenteredSpectrum::from_support(inst.grid(), support, &values)?,
            phases,
            residual,
        })
    };

    if free == 0 {
        let a = vec![Complex64::from_polar(moduli[0], gauge)];
        let c = layout.autocorr(&a);
        let residual = c.iter().zip(&target).map(|(c, b)| (c - b).norm_sqr()).sum();
        return finish(Vec::new(), residual);
    }

    // Digits of the outer slots 1 ..= S-2, the last one split across threads.
    let outer = free - 1;
    let search = |first_top: usize, last_top: usize| -> (f64, Vec<usize>) {
        let mut best = (f64::INFINITY, Vec::new());
        let mut digits = vec![0usize; outer];
        if outer > 0 {
            digits[outer - 1] = first_top;
        }
        let mut a = vec![Complex64::new(0.0, 0.0); len];
        a[len - 1] = Complex64::from_polar(moduli[len - 1], gauge);
        let m0 = moduli[0];
        let rows = layout.lag_count();
        let zero = Complex64::new(0.0, 0.0);
        let (mut k, mut u, mut v) = (vec![zero; rows], vec![zero; rows], vec![zero; rows]);
        let mut sweep = vec![0.0; grid_points];
        loop {
            for (slot, &g) in digits.iter().enumerate() {
                a[slot + 1] = moduli[slot + 1] * units[g];
            }
            // Rows without slot 0, plus its constant diagonal term; u and v
            // carry the products with a_0 = m0 e^{i t} and conj(a_0).
            k.fill(zero);
            u.fill(zero);
            v.fill(zero);
            for p in 1..len {
                k[layout.lag_of(p, p)] += a[p].norm_sqr();
                for q in p + 1..len {
                    let prod = a[p] * a[q].conj();
                    k[layout.lag_of(p, q)] += prod;
                    k[layout.lag_of(q, p)] += prod.conj();
                }
                u[layout.lag_of(0, p)] += m0 * a[p].conj();
                v[layout.lag_of(p, 0)] += a[p] * m0;
            }
            k[layout.lag_of(0, 0)] += m0 * m0;
            let (mut e0, mut e1, mut e2) = (0.0, zero, zero);
            for r in 0..rows {
                let d = k[r] - target[r];
                e0 += d.norm_sqr() + u[r].norm_sqr() + v[r].norm_sqr();
                e1 += d.conj() * u[r] + d * v[r].conj();
                e2 += u[r] * v[r].conj();
            }
            let (c1, s1) = (2.0 * e1.re, -2.0 * e1.im);
            let (c2, s2) = (2.0 * e2.re, -2.0 * e2.im);
            for (value, t) in sweep.iter_mut().zip(&table) {
                *value = e0 + c1 * t[0] + s1 * t[1] + c2 * t[2] + s2 * t[3];
            }
            let (mut low, mut low_g) = (f64::INFINITY, 0);
            for (g, &value) in sweep.iter().enumerate() {
                if value < low {
                    low = value;
                    low_g = g;
                }
            }
            if low < best.0 {
                let mut found = Vec::with_capacity(free);
                found.push(low_g);
                found.extend_from_slice(&digits);
                best = (low, found);
            }
            // Odometer over the outer digits, lowest slot fastest.
            let mut pos = 0;
            loop {
                if pos == outer {
                    return best;
                }
                digits[pos] += 1;
                let limit = if pos == outer - 1 {
                    last_top
                } else {
                    grid_points
                };
                if digits[pos] < limit {
                    break;
                }
                if pos == outer - 1 {
                    return best;
                }
                digits[pos] = 0;
                pos += 1;
            }
        }
    };

    let (residual, digits) = if outer == 0 {
        search(0, 1)
    } else {
        let workers = std::thread::available_parallelism()
            .map_or(1, |n| n.get())
            .min(grid_points);
        let chunk = grid_points.div_ceil(workers);
        let results: Vec<(f64, Vec<usize>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..grid_points)
                .step_by(chunk)
                .map(|start| {
                    let end = (start + chunk).min(grid_points);
                    scope.spawn(move || search(start, end))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("search worker"))
                .collect()
        });
        // Chunks are in scan order; keep the first strict minimum.
        results
            .into_iter()
            .fold((f64::INFINITY, Vec::new()), |best, r| {
                if r.0 < best.0 {
                    r
                } else {
                    best
                }
            })
    };
    finish(digits, residual.max(0.0))
}

/// Errors of a recovered spectrum after removing the best global phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// `min_phi ||e^{i phi} recovered - truth|| / ||truth||`.
    pub spectral_error: f64,
    /// Relative RMS difference of field magnitudes.
    pub field_magnitude_error: f64,
    /// `sum |c - b|^2` over the grid.
    pub residual: f64,
    /// The minimizing `phi`.
    pub gauge_rotation: f64,
    /// Set when `sum conj(recovered) truth = 0`, in which case `phi = 0`.
    pub zero_overlap: bool,
}

/// Relative RMS difference between two magnitude profiles.
pub fn relative_rms(recovered: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = recovered
        .iter()
        .zip(reference)
        .map(|(r, g)| (r - g).powi(2))
        .sum();
    let den: f64 = reference.iter().map(|g| g * g).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn gauge_fit(recovered: &[Complex64], truth: &[Complex64]) -> (f64, f64, bool) {
    let overlap: Complex64 = recovered.iter().zip(truth).map(|(r, t)| r.conj() * t).sum();
    let zero_overlap = overlap.norm() == 0.0;
    let phi = if zero_overlap { 0.0 } else { overlap.arg() };
    let rot = Complex64::cis(phi);
    let num: f64 = recovered
        .iter()
        .zip(truth)
        .map(|(r, t)| (r * rot - t).norm_sqr())
        .sum();
    let den: f64 = truth.iter().map(|t| t.norm_sqr()).sum();
    let err = if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    };
    (err, crate::triangle::wrap_phase(phi), zero_overlap)
}

/// Compares two spectra on the same grid, aligning the global phase.
pub fn compare_up_to_gauge(
    recovered: &CenteredSpectrum,
    truth: &CenteredSpectrum,
) -> Result<ErrorMetrics> {
    if recovered.grid() != truth.grid() {
        return Err(Error::ShapeMismatch);
    }
    let (spectral_error, gauge_rotation, zero_overlap) =
        gauge_fit(recovered.dense(), truth.dense());
    let field_magnitude_error = relative_rms(
        &forward_dft(recovered).magnitudes(),
        &forward_dft(truth).magnitudes(),
    );
    let residual = convolve_direct(recovered)
        .dense()
        .iter()
        .zip(convolve_direct(truth).dense())
        .map(|(c, b)| (c - b).norm_sqr())
        .sum();
    Ok(ErrorMetrics {
        spectral_error,
        field_magnitude_error,
        residual,
        gauge_rotation,
        zero_overlap,
    })
}

/// Metrics of a solve against its instance (field and residual) and, when
/// known, the true spectrum.
pub fn evaluate(
    recovered: &CenteredSpectrum,
    inst: &ProblemInstance1D,
    truth: Option<&CenteredSpectrum>,
) -> Result<ErrorMetrics> {
    if recovered.grid() != inst.grid() {
        return Err(Error::ShapeMismatch);
    }
    let field_magnitude_error =
        relative_rms(&forward_dft(recovered).magnitudes(), inst.field_magnitude());
    let b = inst.autocorr();
    let residual = convolve_direct(recovered)
        .dense()
        .iter()
        .zip(b.dense())
        .map(|(c, b)| (c - b).norm_sqr())
        .sum();
    let (spectral_error, gauge_rotation, zero_overlap) = match truth {
        Some(t) if t.grid() == recovered.grid() => gauge_fit(recovered.dense(), t.dense()),
        Some(_) => return Err(Error::ShapeMismatch),
        None => (f64::NAN, 0.0, false),
    };
    Ok(ErrorMetrics {
        spectral_error,
        field_magnitude_error,
        residual,
        gauge_rotation,
        zero_overlap,
    })
}

/// 2D counterpart of [`compare_up_to_gauge`]; the field error is taken on `grid`.
pub fn compare_up_to_gauge_2d(
    recovered: &Spectrum2D,
    truth: &Spectrum2D,
    grid: Grid,
) -> Result<ErrorMetrics> {
    if recovered.order() != truth.order() {
        return Err(Error::ShapeMismatch);
    }
    let (spectral_error, gauge_rotation, zero_overlap) =
        gauge_fit(recovered.values(), truth.values());
    let mags =
        |s: &Spectrum2D| -> Vec<f64> { forward_dft_2d(s, grid).iter().map(|f| f.norm()).collect() };
    let field_magnitude_error = relative_rms(&mags(recovered), &mags(truth));
    let residual = crate::engine2d::convolve_direct_2d(recovered)
        .values()
        .iter()
        .zip(crate::engine2d::convolve_direct_2d(truth).values())
        .map(|(c, b)| (c - b).norm_sqr())
        .sum();
    Ok(ErrorMetrics {
        spectral_error,
        field_magnitude_error,
        residual,
        gauge_rotation,
        zero_overlap,
    })
}
