//! Discretized generators, generalized eigenproblems, trajectory simulators
//! and decay-rate fits.

pub mod builders;
pub mod decay;
pub mod eigen;
mod problem;
pub mod trajectory;

pub use builders::{
    build_jacobi_problem, build_laguerre_problem, build_one_particle_problem, kkl_certificate,
    rpp_quadrature_check, HatGrid, KklCertificate, RppCheck, SBoundary,
};
pub use decay::{fit_decay_rate, AcfWindow, DecayFit};
pub use eigen::EigenPairs;
pub use problem::{GapResult, InvariantReport, ProblemMeta, SpectralProblem, DENSE_LIMIT};
pub use trajectory::{simulate_laguerre, simulate_wright_fisher, Trajectory};
