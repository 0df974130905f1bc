//! Phase retrieval by recursive triangle peeling.
//!
//! Given the modulus of a band-limited, oversampled signal and the moduli of
//! its Fourier coefficients, the Fourier transform of the squared modulus is
//! the autocorrelation of the coefficients. Peeling that autocorrelation from
//! its highest lag downward leaves, at every row, one equation in two unknown
//! phases, solved as a triangle with two mirror solutions. A closest-point
//! score over all rows picks between them.
//!
//! * [`spectral`]: centered transforms and autocorrelation spectra
//! * [`triangle`]: the two-phase triangle solver
//! * [`engine1d`] / [`engine2d`]: the recursion
//! * [`search`]: backtracking over branch choices when the greedy path fails
//! * [`polish`]: Gauss-Newton refinement of a verified path
//! * [`oracle`]: instance generation, brute-force search and error metrics

pub mod engine1d;
pub mod engine2d;
pub mod error;
pub mod oracle;
pub mod polish;
pub mod search;
mod selector;
pub mod spectral;
pub mod triangle;

pub use engine1d::{
    fix_gauge, solve_1d, solve_1d_greedy, solve_1d_with, solve_1d_with_options, trim_support,
    BranchRecord, ConsistencyFlag, ProblemInstance1D, Recursion1D, SolveReport,
};
pub use engine2d::{
    autocorr2d, solve_2d, solve_2d_with, solve_2d_with_options, ProblemInstance2D, SolveReport2D,
    Spectrum2D,
};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use polish::PolishStats;
pub use search::{SearchPath, SearchStats, SolveOptions};
pub use selector::SelectorMode;
pub use spectral::{
    autocorr_from_magnitude, convolve_direct, forward_dft, inverse_dft, AutocorrSpectrum,
    CenteredSpectrum, Grid, SampledField, Support,
};
pub use triangle::{solve_conjugate_pair, solve_triangle, TriangleProblem, TriangleSolution};
