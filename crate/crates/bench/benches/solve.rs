use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use phaseret_bench::smooth_instances;
use phaseret_core::{autocorr_from_magnitude, solve_1d_with_options, SelectorMode, SolveOptions};

fn recursion(c: &mut Criterion) {
    let mut group = c.benchmark_group("greedy_recursion");
    let options = SolveOptions {
        polish: false,
        ..SolveOptions::greedy(SelectorMode::Incremental)
    };
    for size in [32usize, 64, 128, 256] {
        let instances = smooth_instances(size, 4);
        group.bench_with_input(
            BenchmarkId::from_parameter(size),
            &instances,
            |b, instances| {
                b.iter(|| {
                    for inst in instances {
                        solve_1d_with_options(inst, &options).unwrap();
                    }
                })
            },
        );
    }
    group.finish();
}

fn full_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_with_search");
    group.sample_size(10);
    for size in [16usize, 32, 64] {
        let instances = smooth_instances(size, 4);
        group.bench_with_input(
            BenchmarkId::from_parameter(size),
            &instances,
            |b, instances| {
                b.iter(|| {
                    for inst in instances {
                        solve_1d_with_options(inst, &SolveOptions::default()).unwrap();
                    }
                })
            },
        );
    }
    group.finish();
}

fn selectors(c: &mut Criterion) {
    let mut group = c.benchmark_group("selector");
    let instances = smooth_instances(128, 2);
    for mode in [SelectorMode::Incremental, SelectorMode::Full] {
        let options = SolveOptions::greedy(mode);
        group.bench_function(format!("{mode:?}").to_lowercase(), |b| {
            b.iter(|| {
                for inst in &instances {
                    solve_1d_with_options(inst, &options).unwrap();
                }
            })
        });
    }
    group.finish();
}

fn autocorrelation(c: &mut Criterion) {
    let inst = &smooth_instances(200, 1)[0];
    let mag_sq: Vec<f64> = inst.field_magnitude().iter().map(|f| f * f).collect();
    c.bench_function("autocorr_from_magnitude_399", |b| {
        b.iter(|| autocorr_from_magnitude(&mag_sq).unwrap())
    });
}

criterion_group!(benches, recursion, full_solve, selectors, autocorrelation);
criterion_main!(benches);
