//! Shared fixtures for the criterion benchmarks.

use phaseret_core::oracle::{generate, GeneratorKind, GeneratorSpec};
use phaseret_core::ProblemInstance1D;

/// Noiseless smooth-ensemble instances of support `size`, seeds `0..count`.
pub fn smooth_instances(size: usize, count: u64) -> Vec<ProblemInstance1D> {
    (0..count)
        .map(|seed| {
            generate(&GeneratorSpec::new(GeneratorKind::RandomSmooth, size, seed))
                .expect("generator accepts positive sizes")
                .instance
        })
        .collect()
}
