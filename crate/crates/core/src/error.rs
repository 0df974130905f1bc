use thiserror::Error;

/// Errors raised by the phase retrieval pipeline.
///
/// Data anomalies that still admit an approximate answer (clamped
/// triangles, ties, inconsistent anchors) are not errors; they are recorded
/// as [`ConsistencyFlag`](crate::ConsistencyFlag)s on the solve report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid length must be positive")]
    EmptyGrid,

    #[error("support [{s0}, {s1}] does not fit in a grid of length {grid_len}")]
    SupportOutsideGrid { s0: i64, s1: i64, grid_len: usize },

    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("coefficient at index {index} has magnitude {magnitude:e} outside support (tolerance {tolerance:e})")]
    SupportViolation {
        index: i64,
        magnitude: f64,
        tolerance: f64,
    },

    #[error("oversampling condition violated: support {support} needs 2S-1 <= {grid_len}")]
    Undersampled { support: usize, grid_len: usize },

    #[error("magnitude at position {position} is negative or not finite: {value}")]
    InvalidMagnitude { position: usize, value: f64 },

    #[error("degenerate triangle: both prefactors vanish but |z| = {z_norm:e}")]
    DegenerateTriangle { z_norm: f64 },

    #[error("all coefficient moduli vanish")]
    EmptySupport,

    #[error("anchor coefficient {index:?} has vanishing modulus")]
    AnchorFailure { index: (i64, i64) },

    #[error("brute-force search space {size} exceeds budget {budget}")]
    TooLarge { size: f64, budget: u64 },

    #[error("spectra live on different grids or supports")]
    ShapeMismatch,

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
