//! Trivariate Bernstein-Bezier spline collocation on tetrahedral partitions,
//! with an iterated-Poisson fixed point for the Dirichlet problem of the
//! 3D Monge-Ampere equation det(D^2 u) = f.
//!
//! The pipeline: build a [`mesh::TetMesh`], pick a spline space
//! ([`smoothness::SplineSpace`] of degree D and smoothness r), assemble the
//! Poisson collocation system ([`collocation`]), and drive the nonlinear
//! iteration ([`mae`]). [`bench`] holds the test-function catalog, error
//! norms, and parameter-study harness used by the CLI.

pub mod bench;
pub mod bform;
pub mod collocation;
pub mod mae;
pub mod mesh;
pub mod smoothness;
pub mod sparse;
pub(crate) mod util;

pub use bench::{catalog, error_norms, find_case, rate_table, ErrorReport, TestCase};
pub use bform::{eval_basis, multi_indices, rank, Bary, DerivBundle, MultiIndex, Spline};
pub use collocation::{
    assemble, poisson_solve, CollocationSystem, FactorizedPoisson, SolveConfig, SolveReport,
};
pub use mae::{
    convexity_report, convexity_report_seeded, initial_guess, mae_rhs, run_alg1, run_alg2,
    Algorithm, ConvexityReport, InitMode, IterRecord, MaeProblem, MaeRun, StopReason,
};
pub use mesh::{
    build_box_grid, build_letter_domain, load_mesh, save_mesh, DomainSpec, LetterKind, TetMesh,
};
pub use smoothness::{smoothness_residual, SplineSpace};
pub use sparse::Csr;

use thiserror::Error;

/// Errors surfaced by mesh construction, assembly, and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: degrees out of range, incompatible sizes,
    /// malformed domain parameters, unknown case names.
    #[error("{0}")]
    Config(String),
    /// A mesh file could not be parsed. Line numbers are 1-based.
    #[error("{path}:{line}: {msg}")]
    MeshParse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    /// Unrecoverable numerical failure inside a solver.
    #[error("{0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Sign-preserving real cube root, `realcbrt(-8) = -2`.
///
/// The fixed-point update takes cube roots of quantities that can dip
/// negative far from the solution; the real root keeps the iteration defined.
#[inline]
pub fn realcbrt(x: f64) -> f64 {
    x.cbrt()
}
