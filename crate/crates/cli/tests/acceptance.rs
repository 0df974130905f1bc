//! The acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so that every line is printed, and
//! exits nonzero when any criterion fails.

use std::f64::consts::TAU;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use phaseret_cli::commands::{bench, BenchArgs};
use phaseret_core::engine2d::{autocorr2d, convolve_direct_2d, forward_dft_2d};
use phaseret_core::oracle::{
    brute_force_solve, compare_up_to_gauge, compare_up_to_gauge_2d, evaluate, generate,
    generate_2d, GeneratorKind, GeneratorSpec, BRUTE_FORCE_BUDGET,
};
use phaseret_core::{
    autocorr_from_magnitude, convolve_direct, forward_dft, solve_1d, solve_1d_with, solve_2d,
    solve_triangle, CenteredSpectrum, Complex64, Grid, SelectorMode, SolveOptions, Support,
    TriangleProblem,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXACT: f64 = 1e-10;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn spectral_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.gen_range(4..=64usize);
        let m = 2 * len - 1 + rng.gen_range(0..8);
        let grid = Grid::new(m).unwrap();
        let s0 = rng.gen_range(grid.lo()..=grid.hi() - len as i64 + 1);
        let values: Vec<Complex64> = (0..len)
            .map(|_| Complex64::from_polar(rng.gen_range(0.0..1.0), rng.gen_range(0.0..TAU)))
            .collect();
        let spec =
            CenteredSpectrum::from_support(grid, Support::new(s0, s0 + len as i64 - 1), &values)
                .unwrap();
        let via_field = autocorr_from_magnitude(&forward_dft(&spec).magnitudes_sqr()).unwrap();
        for (a, b) in via_field.dense().iter().zip(convolve_direct(&spec).dense()) {
            worst = worst.max((a - b).norm());
        }
    }
    for seed in 0..100 {
        let order = 1 + (seed % 3) as usize;
        let extra = (seed / 3 % 3) as usize;
        let (truth, _) = generate_2d(order, None, seed, 0.0).unwrap();
        let grid = Grid::new(4 * order + 1 + extra).unwrap();
        let mag_sq: Vec<f64> = forward_dft_2d(&truth, grid)
            .iter()
            .map(|f| f.norm_sqr())
            .collect();
        let via_field = autocorr2d(&mag_sq, grid, order).unwrap();
        for (a, b) in via_field
            .values()
            .iter()
            .zip(convolve_direct_2d(&truth).values())
        {
            worst = worst.max((a - b).norm());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-10 && secs < 10.0,
        format!("200 instances, max deviation {worst:.1e}, {secs:.2} s"),
    )
}

fn triangle_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    const G: usize = 720;
    let units: Vec<Complex64> = (0..G)
        .map(|g| Complex64::cis(TAU * g as f64 / G as f64))
        .collect();
    let (mut infeasible, mut worst_excess) = (0, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let x = Complex64::from_polar(rng.gen_range(0.0..2.0), rng.gen_range(0.0..TAU));
        let y = Complex64::from_polar(rng.gen_range(0.0..2.0), rng.gen_range(0.0..TAU));
        let z = Complex64::from_polar(rng.gen_range(0.0..4.0), rng.gen_range(0.0..TAU));
        let (nx, ny, nz) = (x.norm(), y.norm(), z.norm());
        if nz > nx + ny || nz < (nx - ny).abs() {
            infeasible += 1;
        }
        let p = TriangleProblem::new(x, y, z);
        let ours = solve_triangle(&p)
            .unwrap()
            .branches
            .iter()
            .map(|b| b.residual)
            .fold(f64::INFINITY, f64::min);
        let xs: Vec<Complex64> = units.iter().map(|e| x * e - z).collect();
        let ys: Vec<Complex64> = units.iter().map(|e| y * e).collect();
        let mut grid_min = f64::INFINITY;
        for xv in &xs {
            for yv in &ys {
                grid_min = grid_min.min((xv + yv).norm_sqr());
            }
        }
        let slack = 1e-9 * (nx + ny + nz);
        worst_excess = worst_excess.max(ours - grid_min.sqrt() - slack);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_excess <= 0.0 && infeasible > 0 && infeasible < 1000 && secs < 60.0,
        format!(
            "1000 problems ({infeasible} infeasible), worst excess over grid minimum {worst_excess:.1e}, {secs:.1} s"
        ),
    )
}

fn exact_recovery() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for size in [8usize, 16, 32, 64] {
        let (mut exact, mut unflagged) = (0, 0);
        for seed in 0..100 {
            let g = generate(&GeneratorSpec::new(GeneratorKind::RandomSmooth, size, seed)).unwrap();
            let report = solve_1d(&g.instance).unwrap();
            let err = compare_up_to_gauge(&report.recovered, &g.truth)
                .unwrap()
                .spectral_error;
            if err <= EXACT {
                exact += 1;
            } else if report.consistency_flags.is_empty() {
                unflagged += 1;
            }
        }
        ok &= exact >= 95 && unflagged == 0;
        parts.push(format!(
            "S={size} {exact}/100 unflagged failures {unflagged}"
        ));
    }
    check(ok, format!("smooth ensemble: {}", parts.join(", ")))
}

fn oracle_equivalence() -> Outcome {
    const G: usize = 64;
    let (mut worst_gap, mut worst_ratio): (f64, f64) = (0.0, 0.0);
    let mut misses = Vec::new();
    for size in 3..=6usize {
        for seed in 0..10 {
            let g = generate(&GeneratorSpec::new(
                GeneratorKind::RandomUniform,
                size,
                seed,
            ))
            .unwrap();
            let ours = solve_1d(&g.instance).unwrap();
            let brute = brute_force_solve(&g.instance, G, BRUTE_FORCE_BUDGET).unwrap();
            let mine = evaluate(&ours.recovered, &g.instance, None)
                .unwrap()
                .residual;
            let grid_best = evaluate(&brute.spectrum, &g.instance, None)
                .unwrap()
                .residual;
            // Both fix the top slot to the same gauge, so phases compare directly.
            let gap = ours
                .phases
                .iter()
                .zip(&brute.phases)
                .map(|(a, b)| angle_gap(*a, *b))
                .fold(0.0, f64::max);
            worst_gap = worst_gap.max(gap);
            worst_ratio = worst_ratio.max(mine / grid_best);
            if mine > grid_best {
                misses.push(format!("S={size} seed={seed}"));
            }
        }
    }
    check(
        misses.is_empty(),
        format!(
            "40 instances, worst residual ratio to grid optimum {worst_ratio:.1e}, worst phase gap {worst_gap:.3} rad (cell {:.3}){}",
            TAU / G as f64,
            if misses.is_empty() { String::new() } else { format!(", above grid optimum: {}", misses.join(" ")) }
        ),
    )
}

fn one_sided() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for size in [8usize, 16] {
        let mut exact = 0;
        for seed in 0..50 {
            let g = generate(&GeneratorSpec::new(GeneratorKind::OneSided, size, seed)).unwrap();
            let report = solve_1d(&g.instance).unwrap();
            if compare_up_to_gauge(&report.recovered, &g.truth)
                .unwrap()
                .spectral_error
                <= EXACT
            {
                exact += 1;
            }
        }
        ok &= exact * 100 >= 95 * 50;
        parts.push(format!("S={size} {exact}/50"));
    }
    check(ok, parts.join(", "))
}

fn two_dimensional() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for order in 1..=3usize {
        let (mut exact, mut assertion_failures) = (0, 0);
        for seed in 0..50 {
            let (truth, inst) = generate_2d(order, None, seed, 0.3).unwrap();
            match catch_unwind(AssertUnwindSafe(|| solve_2d(&inst))) {
                Ok(report) => {
                    let report = report.unwrap();
                    let m = compare_up_to_gauge_2d(&report.recovered, &truth, inst.grid()).unwrap();
                    if m.spectral_error <= EXACT {
                        exact += 1;
                    }
                }
                Err(_) => assertion_failures += 1,
            }
        }
        ok &= exact * 100 >= 90 * 50 && assertion_failures == 0;
        parts.push(format!("N={order} {exact}/50"));
        if assertion_failures > 0 {
            parts.push(format!("ordering assertion fired {assertion_failures}x"));
        }
    }
    check(ok, parts.join(", "))
}

fn complexity() -> Outcome {
    let args = BenchArgs {
        sizes: vec![64, 128, 256],
        trials: 10,
        runs: 5,
        options: SolveOptions {
            search: false,
            polish: false,
            ..SolveOptions::default()
        },
        ..BenchArgs::default()
    };
    let rows = bench(&args).map_err(|e| e.to_string())?;
    let ratios: Vec<f64> = rows
        .windows(2)
        .map(|w| w[1].median_seconds / w[0].median_seconds)
        .collect();
    check(
        ratios.iter().all(|r| (3.0..=6.0).contains(r)),
        format!(
            "recursion runtime ratios S=64->128 {:.2}, 128->256 {:.2} (median of 5 runs)",
            ratios[0], ratios[1]
        ),
    )
}

/// Runs `generate` and `solve` on the reference waveform through the binary.
fn reference_run(dir: &Path, noise: f64) -> Result<serde_json::Value, String> {
    let exe = env!("CARGO_BIN_EXE_phaseret");
    let tag = if noise == 0.0 {
        "clean".to_string()
    } else {
        format!("noise{noise}")
    };
    let instance = dir.join(format!("{tag}.instance"));
    let status = Command::new(exe)
        .args([
            "generate",
            "--kind",
            "paper-h",
            "--noise",
            &noise.to_string(),
            "--out",
        ])
        .arg(&instance)
        .status()
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("generate exited with {status}"));
    }
    let out = Command::new(exe)
        .arg("solve")
        .arg(&instance)
        .args(["--format", "json", "--emit-curves"])
        .arg(dir.join(&tag))
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("solve exited with {}", out.status));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())
}

fn field_error(report: &serde_json::Value) -> f64 {
    report["metrics"]["field_magnitude_error"]
        .as_f64()
        .unwrap_or(f64::NAN)
}

fn curve_rows(path: &Path) -> usize {
    std::fs::read_to_string(path)
        .map(|t| t.lines().filter(|l| !l.starts_with('#')).count())
        .unwrap_or(0)
}

fn reference_waveform(dir: &Path) -> Outcome {
    let report = reference_run(dir, 0.0)?;
    let err = field_error(&report);
    let field_rows = curve_rows(&dir.join("clean.field.txt"));
    let spectrum_rows = curve_rows(&dir.join("clean.spectrum.txt"));
    check(
        err <= 0.1 && field_rows == 399 && spectrum_rows == 200,
        format!(
            "M=399 S=200, field magnitude error {err:.2e}, search path {}, curves {field_rows}+{spectrum_rows} rows",
            report["search"]["path"].as_str().unwrap_or("?")
        ),
    )
}

fn noisy_reference_waveform(dir: &Path) -> Outcome {
    let clean = field_error(&reference_run(dir, 0.0)?);
    let report = reference_run(dir, 0.3)?;
    let noisy = field_error(&report);
    let flags = report["consistency_flags"].as_array().map_or(0, Vec::len);
    check(
        noisy > clean,
        format!(
            "noise 0.3: field magnitude error {noisy:.3} vs {clean:.2e} noiseless, {flags} flags"
        ),
    )
}

fn selector_equivalence() -> Outcome {
    let mut mismatches = Vec::new();
    let mut worst_gap: f64 = 0.0;
    for seed in 0..100u64 {
        let size = 2 + (seed as usize * 13) % 63;
        let kind = if seed % 2 == 0 {
            GeneratorKind::RandomSmooth
        } else {
            GeneratorKind::RandomUniform
        };
        let g = generate(&GeneratorSpec::new(kind, size, seed)).unwrap();
        let inc = solve_1d_with(&g.instance, SelectorMode::Incremental).unwrap();
        let full = solve_1d_with(&g.instance, SelectorMode::Full).unwrap();
        if inc.decisions() != full.decisions() {
            mismatches.push(format!("S={size} seed={seed}"));
        }
        for (a, b) in inc.branch_log.iter().zip(&full.branch_log) {
            worst_gap = worst_gap.max((a.gap - b.gap).abs());
        }
    }
    check(
        mismatches.is_empty(),
        format!(
            "100 instances S<=64, {} differing logs, largest gap difference {worst_gap:.1e}",
            mismatches.len()
        ),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<Criterion> = vec![
        ("spectral correctness", Box::new(spectral_correctness)),
        ("triangle optimality", Box::new(triangle_optimality)),
        ("exact recovery", Box::new(exact_recovery)),
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("one-sided recovery", Box::new(one_sided)),
        ("2d recovery", Box::new(two_dimensional)),
        ("quadratic runtime", Box::new(complexity)),
        (
            "reference waveform",
            Box::new(|| reference_waveform(dir.path())),
        ),
        (
            "noisy reference waveform",
            Box::new(|| noisy_reference_waveform(dir.path())),
        ),
        ("selector equivalence", Box::new(selector_equivalence)),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let outcome =
            catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let (verdict, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {name}: {verdict} ({detail})", n + 1);
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
