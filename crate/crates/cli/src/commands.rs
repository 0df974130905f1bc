use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use phaseret_core::engine2d::{forward_dft_2d, Index2};
use phaseret_core::oracle::{
    compare_up_to_gauge, compare_up_to_gauge_2d, evaluate, generate as generate_1d, generate_2d,
    relative_rms, ErrorMetrics, GeneratorKind, GeneratorMetadata, GeneratorSpec,
};
use phaseret_core::{
    forward_dft, solve_1d_with_options, solve_2d_with_options, BranchRecord, ConsistencyFlag,
    PolishStats, SearchStats, SelectorMode, SolveOptions,
};
use serde::Serialize;

use crate::files::{real, Coefficients, InstanceFile, Measurement, FORMAT_VERSION};
use crate::CliError;

/// Spectral error at or below which a trial counts as exact recovery.
pub const SUCCESS_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub kind: Option<GeneratorKind>,
    pub dim: usize,
    pub size: Option<usize>,
    pub order: Option<usize>,
    pub seed: u64,
    pub noise: f64,
    pub grid: Option<usize>,
    pub min_modulus: Option<f64>,
}

impl Default for GenerateArgs {
    fn default() -> Self {
        Self {
            kind: None,
            dim: 1,
            size: None,
            order: None,
            seed: 0,
            noise: 0.0,
            grid: None,
            min_modulus: None,
        }
    }
}

/// Builds an instance and its ground truth.
pub fn generate(args: &GenerateArgs) -> Result<(InstanceFile, Coefficients), CliError> {
    let usage = |m: &str| Err(CliError::Usage(m.to_string()));
    if !(args.noise >= 0.0 && args.noise.is_finite()) {
        return usage("--noise must be a finite value >= 0");
    }
    if let Some(m) = args.min_modulus {
        if !(0.0..=1.0).contains(&m) {
            return usage("--min-modulus must lie in [0, 1]");
        }
    }
    match args.dim {
        1 => {
            let Some(kind) = args.kind else {
                return usage("--kind is required in 1d");
            };
            if args.order.is_some() {
                return usage("--order only applies to --dim 2");
            }
            let size = match (kind, args.size) {
                (GeneratorKind::PaperH, Some(_)) => {
                    return usage("paper-h has a fixed size; drop --size")
                }
                (GeneratorKind::PaperH, None) => phaseret_core::oracle::PAPER_H_SUPPORT,
                (GeneratorKind::CustomCoeffs, _) => {
                    return usage("custom-coeffs instances are built through the library")
                }
                (_, Some(0)) => return usage("--size must be positive"),
                (_, Some(s)) => s,
                (_, None) => return usage("--size is required for this kind"),
            };
            if kind == GeneratorKind::PaperH && args.grid.is_some() {
                return usage("paper-h has a fixed grid; drop --grid");
            }
            let mut spec = GeneratorSpec::new(kind, size, args.seed).with_noise(args.noise);
            if let Some(m) = args.grid {
                spec = spec.with_grid_len(m);
            }
            if let Some(m) = args.min_modulus {
                spec = spec.with_min_modulus(m);
            }
            let g = generate_1d(&spec)?;
            Ok((
                InstanceFile::from_1d(&g.instance, Some(g.metadata)),
                Coefficients::OneD(g.truth),
            ))
        }
        2 => {
            if !matches!(args.kind, None | Some(GeneratorKind::RandomUniform)) {
                return usage("--dim 2 supports only --kind random-uniform");
            }
            if args.size.is_some() {
                return usage("use --order instead of --size with --dim 2");
            }
            if args.noise != 0.0 {
                return usage("--noise is not supported with --dim 2");
            }
            let Some(order) = args.order else {
                return usage("--order is required with --dim 2");
            };
            let min_modulus = args.min_modulus.unwrap_or(0.3);
            let (truth, inst) = generate_2d(order, args.grid, args.seed, min_modulus)?;
            let metadata = GeneratorMetadata {
                kind: GeneratorKind::RandomUniform,
                seed: args.seed,
                noise: 0.0,
                sinc: "unnormalized".into(),
                axis: None,
            };
            let grid = inst.grid();
            Ok((
                InstanceFile::from_2d(&inst, Some(metadata)),
                Coefficients::TwoD {
                    grid,
                    spectrum: truth,
                },
            ))
        }
        other => usage(&format!("--dim must be 1 or 2, got {other}")),
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveArgs {
    /// Overrides the instance's gauge phase.
    pub gauge: Option<f64>,
    /// Extra `(index, phase)` hints, index of length 1 or 2.
    pub priors: Vec<(Vec<i64>, f64)>,
    pub options: SolveOptions,
    pub truth: Option<Coefficients>,
}

/// One coefficient as written to JSON.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientEntry {
    pub index: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum BranchLog {
    OneD(Vec<BranchRecord<i64>>),
    TwoD(Vec<BranchRecord<Index2>>),
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: String,
    pub mode: String,
    pub grid: usize,
    pub selector: SelectorMode,
    pub search: SearchStats,
    pub polish: PolishStats,
    pub final_residual: f64,
    pub metrics: ErrorMetrics,
    pub consistency_flags: Vec<ConsistencyFlag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordering_checks: Option<usize>,
    pub branch_log: BranchLog,
    pub coefficients: Vec<CoefficientEntry>,
    pub elapsed_seconds: f64,
    #[serde(skip)]
    pub recovered: Coefficients,
    /// `(position, given |f|, recovered |f|)` per field sample.
    #[serde(skip)]
    pub field_curve: Vec<(Vec<f64>, f64, f64)>,
    /// `(index, given modulus, recovered modulus, recovered phase)`.
    #[serde(skip)]
    pub spectrum_curve: Vec<(Vec<i64>, f64, f64, f64)>,
}

pub fn tool_version() -> String {
    format!("phaseret {}", env!("CARGO_PKG_VERSION"))
}

fn priors_for<const D: usize>(
    priors: &[(Vec<i64>, f64)],
) -> Result<Vec<([i64; D], f64)>, CliError> {
    priors
        .iter()
        .map(|(idx, phase)| {
            let idx: [i64; D] = idx.as_slice().try_into().map_err(|_| {
                CliError::Usage(format!(
                    "prior index {idx:?} does not match a {D}d instance"
                ))
            })?;
            Ok((idx, *phase))
        })
        .collect()
}

pub fn solve(file: &InstanceFile, args: &SolveArgs) -> Result<Report, CliError> {
    let gauge = args.gauge.unwrap_or(file.gauge);
    match &file.measurement {
        Measurement::OneD { .. } => {
            let mut inst = file.instance_1d()?.with_gauge(gauge);
            for ([l], phase) in priors_for::<1>(&args.priors)? {
                inst = inst.with_prior(l, phase);
            }
            let truth = match &args.truth {
                None => None,
                Some(Coefficients::OneD(t)) => Some(t),
                Some(_) => {
                    return Err(CliError::Usage("truth is 2d but the instance is 1d".into()))
                }
            };
            let start = Instant::now();
            let report = solve_1d_with_options(&inst, &args.options)?;
            let elapsed_seconds = start.elapsed().as_secs_f64();
            let metrics = evaluate(&report.recovered, &inst, truth)?;
            let axis = file.generator.as_ref().and_then(|g| g.axis);
            let grid = inst.grid();
            let position = |k: i64| match axis {
                Some((t0, dt)) => t0 + dt * (k - grid.lo()) as f64,
                None => k as f64,
            };
            let field_curve = grid
                .indices()
                .zip(inst.field_magnitude())
                .zip(forward_dft(&report.recovered).magnitudes())
                .map(|((k, &given), rec)| (vec![position(k)], given, rec))
                .collect();
            let spectrum_curve = inst
                .support()
                .indices()
                .zip(inst.coeff_magnitudes())
                .map(|(l, &m)| {
                    let a = report.recovered.get(l);
                    (
                        vec![l],
                        m,
                        a.norm(),
                        phaseret_core::triangle::wrap_phase(a.arg()),
                    )
                })
                .collect();
            let coefficients = report
                .recovered
                .support()
                .indices()
                .zip(report.recovered.support_values())
                .map(|(l, a)| CoefficientEntry {
                    index: vec![l],
                    re: a.re,
                    im: a.im,
                })
                .collect();
            Ok(Report {
                tool: tool_version(),
                mode: "1d".into(),
                grid: grid.len(),
                selector: report.selector,
                search: report.search,
                polish: report.polish,
                final_residual: report.final_residual,
                metrics,
                consistency_flags: report.consistency_flags,
                ordering_checks: None,
                branch_log: BranchLog::OneD(report.branch_log),
                coefficients,
                elapsed_seconds,
                recovered: Coefficients::OneD(report.recovered),
                field_curve,
                spectrum_curve,
            })
        }
        Measurement::TwoD { .. } => {
            let mut inst = file.instance_2d()?.with_gauge(gauge);
            for ([u, v], phase) in priors_for::<2>(&args.priors)? {
                inst = inst.with_prior((u, v), phase);
            }
            let grid = inst.grid();
            let start = Instant::now();
            let report = solve_2d_with_options(&inst, &args.options)?;
            let elapsed_seconds = start.elapsed().as_secs_f64();
            let recovered_field: Vec<f64> = forward_dft_2d(&report.recovered, grid)
                .iter()
                .map(|f| f.norm())
                .collect();
            let metrics = match &args.truth {
                None => ErrorMetrics {
                    spectral_error: f64::NAN,
                    field_magnitude_error: relative_rms(&recovered_field, inst.field_magnitude()),
                    residual: report.final_residual,
                    gauge_rotation: 0.0,
                    zero_overlap: false,
                },
                Some(Coefficients::TwoD { spectrum, .. }) => {
                    let mut m = compare_up_to_gauge_2d(&report.recovered, spectrum, grid)?;
                    m.field_magnitude_error =
                        relative_rms(&recovered_field, inst.field_magnitude());
                    m.residual = report.final_residual;
                    m
                }
                Some(_) => {
                    return Err(CliError::Usage("truth is 1d but the instance is 2d".into()))
                }
            };
            let ks: Vec<i64> = grid.indices().collect();
            let cells = ks.iter().flat_map(|&a| ks.iter().map(move |&b| (a, b)));
            let field_curve = cells
                .zip(inst.field_magnitude())
                .zip(&recovered_field)
                .map(|(((k1, k2), &given), &rec)| (vec![k1 as f64, k2 as f64], given, rec))
                .collect();
            let spectrum = &report.recovered;
            let spectrum_curve = (0..spectrum.values().len())
                .map(|slot| {
                    let (u, v) = spectrum.index_of(slot);
                    let a = spectrum.values()[slot];
                    (
                        vec![u, v],
                        inst.coeff_magnitudes()[slot],
                        a.norm(),
                        phaseret_core::triangle::wrap_phase(a.arg()),
                    )
                })
                .collect();
            let coefficients = spectrum
                .values()
                .iter()
                .enumerate()
                .map(|(slot, a)| {
                    let (u, v) = spectrum.index_of(slot);
                    CoefficientEntry {
                        index: vec![u, v],
                        re: a.re,
                        im: a.im,
                    }
                })
                .collect();
            Ok(Report {
                tool: tool_version(),
                mode: "2d".into(),
                grid: grid.len(),
                selector: report.selector,
                search: report.search,
                polish: report.polish,
                final_residual: report.final_residual,
                metrics,
                consistency_flags: report.consistency_flags,
                ordering_checks: Some(report.ordering_checks),
                branch_log: BranchLog::TwoD(report.branch_log),
                coefficients,
                elapsed_seconds,
                recovered: Coefficients::TwoD {
                    grid,
                    spectrum: report.recovered,
                },
                field_curve,
                spectrum_curve,
            })
        }
    }
}

fn search_path_name(stats: &SearchStats) -> String {
    serde_json::to_value(stats.path)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn flag_line(flag: &ConsistencyFlag) -> String {
    match flag {
        ConsistencyFlag::SupportTrimmed { from, to } => {
            format!(
                "support_trimmed from {} {} to {} {}",
                from.s0, from.s1, to.s0, to.s1
            )
        }
        ConsistencyFlag::InconsistentTop { expected, measured } => {
            format!(
                "inconsistent_top expected {} measured {}",
                real(*expected),
                real(*measured)
            )
        }
        ConsistencyFlag::Clamped { step, residual } => {
            format!("clamped step {step} residual {}", real(*residual))
        }
        ConsistencyFlag::Degenerate { step } => format!("degenerate step {step}"),
        ConsistencyFlag::Tie { step } => format!("tie step {step}"),
        ConsistencyFlag::Unverified { expanded } => format!("unverified expanded {expanded}"),
    }
}

impl Report {
    /// Text report. Everything except `elapsed_seconds` is a function of
    /// the instance and the flags.
    pub fn to_text(&self) -> String {
        let mut out = format!("phaseret report {FORMAT_VERSION}\n");
        let _ = writeln!(out, "tool {}", self.tool);
        out.push_str(&self.recovered.header());
        let _ = writeln!(
            out,
            "selector {}",
            serde_json::to_value(self.selector)
                .unwrap()
                .as_str()
                .unwrap()
        );
        let s = &self.search;
        let _ = writeln!(
            out,
            "search {} expanded {} backtracks {} leaves {}",
            search_path_name(s),
            s.expanded,
            s.backtracks,
            s.leaves
        );
        let p = &self.polish;
        let _ = writeln!(
            out,
            "polish steps {} before {} after {}",
            p.steps,
            real(p.residual_before),
            real(p.residual_after)
        );
        let _ = writeln!(out, "final_residual {}", real(self.final_residual));
        let m = &self.metrics;
        let _ = writeln!(out, "spectral_error {}", real(m.spectral_error));
        let _ = writeln!(
            out,
            "field_magnitude_error {}",
            real(m.field_magnitude_error)
        );
        let _ = writeln!(out, "gauge_rotation {}", real(m.gauge_rotation));
        if let Some(n) = self.ordering_checks {
            let _ = writeln!(out, "ordering_checks {n}");
        }
        let _ = writeln!(out, "elapsed_seconds {}", real(self.elapsed_seconds));
        out.push_str("[flags]\n");
        for flag in &self.consistency_flags {
            let _ = writeln!(out, "{}", flag_line(flag));
        }
        out.push_str("[branch_log]\n");
        match &self.branch_log {
            BranchLog::OneD(log) => {
                out.push_str("# step hi lo branch gap tie\n");
                for r in log {
                    let _ = writeln!(
                        out,
                        "{} {} {} {} {} {}",
                        r.step,
                        r.indices.0,
                        r.indices.1,
                        r.branch,
                        real(r.gap),
                        u8::from(r.tie)
                    );
                }
            }
            BranchLog::TwoD(log) => {
                out.push_str("# step j1 j2 i1 i2 branch gap tie\n");
                for r in log {
                    let ((a, b), (c, d)) = r.indices;
                    let _ = writeln!(
                        out,
                        "{} {a} {b} {c} {d} {} {} {}",
                        r.step,
                        r.branch,
                        real(r.gap),
                        u8::from(r.tie)
                    );
                }
            }
        }
        out.push_str(&self.recovered.section());
        out
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Column files for plotting: the field magnitudes and the spectrum.
    pub fn curves(&self) -> (String, String) {
        let mut field = String::new();
        let mut spectrum = String::new();
        if self.mode == "1d" {
            field.push_str("# t given_magnitude recovered_magnitude\n");
            spectrum.push_str("# l given_modulus recovered_modulus recovered_phase\n");
        } else {
            field.push_str("# k1 k2 given_magnitude recovered_magnitude\n");
            spectrum.push_str("# u v given_modulus recovered_modulus recovered_phase\n");
        }
        for (pos, given, rec) in &self.field_curve {
            let pos: Vec<String> = pos.iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(field, "{} {} {}", pos.join(" "), real(*given), real(*rec));
        }
        for (idx, given, rec, phase) in &self.spectrum_curve {
            let idx: Vec<String> = idx.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(
                spectrum,
                "{} {} {} {}",
                idx.join(" "),
                real(*given),
                real(*rec),
                real(*phase)
            );
        }
        (field, spectrum)
    }

    pub fn emit_curves(&self, prefix: &Path) -> Result<(), CliError> {
        let (field, spectrum) = self.curves();
        let with = |suffix: &str| {
            let mut name = prefix.as_os_str().to_owned();
            name.push(suffix);
            std::path::PathBuf::from(name)
        };
        crate::write_file(&with(".field.txt"), &field)?;
        crate::write_file(&with(".spectrum.txt"), &spectrum)
    }
}

/// Metrics of `candidate` against `truth`; with an instance, the field
/// error is measured against its magnitudes instead of the truth's.
pub fn verify(
    candidate: &Coefficients,
    truth: &Coefficients,
    instance: Option<&InstanceFile>,
) -> Result<ErrorMetrics, CliError> {
    match (candidate, truth) {
        (Coefficients::OneD(c), Coefficients::OneD(t)) => match instance {
            Some(file) => Ok(evaluate(c, &file.instance_1d()?, Some(t))?),
            None => Ok(compare_up_to_gauge(c, t)?),
        },
        (Coefficients::TwoD { grid, spectrum: c }, Coefficients::TwoD { spectrum: t, .. }) => {
            let mut m = compare_up_to_gauge_2d(c, t, *grid)?;
            if let Some(file) = instance {
                let inst = file.instance_2d()?;
                let field: Vec<f64> = forward_dft_2d(c, inst.grid())
                    .iter()
                    .map(|f| f.norm())
                    .collect();
                m.field_magnitude_error = relative_rms(&field, inst.field_magnitude());
            }
            Ok(m)
        }
        _ => Err(CliError::Usage(
            "candidate and truth differ in dimension".into(),
        )),
    }
}

pub fn metrics_text(m: &ErrorMetrics) -> String {
    format!(
        "phaseret metrics {FORMAT_VERSION}\nspectral_error {}\nfield_magnitude_error {}\nresidual {}\ngauge_rotation {}\nzero_overlap {}\n",
        real(m.spectral_error),
        real(m.field_magnitude_error),
        real(m.residual),
        real(m.gauge_rotation),
        m.zero_overlap
    )
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub runs: usize,
    pub kind: GeneratorKind,
    pub seed: u64,
    pub options: SolveOptions,
}

impl Default for BenchArgs {
    fn default() -> Self {
        Self {
            sizes: Vec::new(),
            trials: 10,
            runs: 5,
            kind: GeneratorKind::RandomSmooth,
            seed: 0,
            options: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub trials: usize,
    pub runs: usize,
    /// Median over runs of the mean time per solve.
    pub median_seconds: f64,
    pub mean_seconds: f64,
    pub mean_spectral_error: f64,
    pub success_rate: f64,
}

/// Times `trials` solves per size, `runs` times over. Instances are built
/// before the clock starts; trial `t` uses seed `seed + t`.
pub fn bench(args: &BenchArgs) -> Result<Vec<BenchRow>, CliError> {
    if args.sizes.is_empty() {
        return Err(CliError::Usage("--sizes needs at least one size".into()));
    }
    if args.trials == 0 || args.runs == 0 {
        return Err(CliError::Usage(
            "--trials and --runs must be positive".into(),
        ));
    }
    if matches!(
        args.kind,
        GeneratorKind::PaperH | GeneratorKind::CustomCoeffs
    ) {
        return Err(CliError::Usage("bench needs a sized random kind".into()));
    }
    if args.sizes.contains(&0) {
        return Err(CliError::Usage("sizes must be positive".into()));
    }
    let mut rows = Vec::with_capacity(args.sizes.len());
    for &size in &args.sizes {
        let instances = (0..args.trials as u64)
            .map(|t| generate_1d(&GeneratorSpec::new(args.kind, size, args.seed + t)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut per_run = Vec::with_capacity(args.runs);
        let mut errors = Vec::with_capacity(args.trials);
        for run in 0..args.runs {
            let start = Instant::now();
            let mut reports = Vec::with_capacity(args.trials);
            for g in &instances {
                reports.push(solve_1d_with_options(&g.instance, &args.options)?);
            }
            per_run.push(start.elapsed().as_secs_f64() / args.trials as f64);
            if run == 0 {
                for (g, r) in instances.iter().zip(&reports) {
                    errors.push(compare_up_to_gauge(&r.recovered, &g.truth)?.spectral_error);
                }
            }
        }
        let mean_seconds = per_run.iter().sum::<f64>() / per_run.len() as f64;
        per_run.sort_by(f64::total_cmp);
        let mid = per_run.len() / 2;
        let median_seconds = if per_run.len() % 2 == 1 {
            per_run[mid]
        } else {
            0.5 * (per_run[mid - 1] + per_run[mid])
        };
        let successes = errors.iter().filter(|e| **e <= SUCCESS_THRESHOLD).count();
        rows.push(BenchRow {
            size,
            trials: args.trials,
            runs: args.runs,
            median_seconds,
            mean_seconds,
            mean_spectral_error: errors.iter().sum::<f64>() / errors.len() as f64,
            success_rate: successes as f64 / errors.len() as f64,
        });
    }
    Ok(rows)
}

pub fn bench_text(args: &BenchArgs, rows: &[BenchRow]) -> String {
    let mut out = format!("phaseret bench {FORMAT_VERSION}\n");
    let _ = writeln!(out, "kind {}", args.kind.name());
    let _ = writeln!(
        out,
        "search {}",
        if args.options.search { "on" } else { "off" }
    );
    let _ = writeln!(
        out,
        "polish {}",
        if args.options.polish { "on" } else { "off" }
    );
    out.push_str(
        "[rows]\n# size trials runs median_seconds mean_seconds mean_spectral_error success_rate\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {}",
            r.size,
            r.trials,
            r.runs,
            real(r.median_seconds),
            real(r.mean_seconds),
            real(r.mean_spectral_error),
            real(r.success_rate)
        );
    }
    out
}
