//! Numerical laboratory for mean field games on the flat torus.
//!
//! The crate solves the coupled backward Hamilton–Jacobi–Bellman / forward
//! Fokker–Planck system
//!
//! ```text
//! -∂t u - ν Δu + H(x, Du) = f(x, m),      u(T,·) = ū,
//!  ∂t m - ν Δm - ∇·(m DpH(x, Du)) = 0,    m(0,·) = m̄,
//! ```
//!
//! for ν ≥ 0 on 𝕋^d (d = 1, 2), evaluates the dual variational functionals
//! whose gap vanishes exactly at the solution, and measures how fast the
//! ν > 0 solutions approach the first-order (ν = 0) limit as ν shrinks.
//! Measured log-log rates are compared one-sidedly against the proven
//! exponents (the bounds are upper bounds; steeper is fine).
//!
//! Module map:
//! - [`grid`]: periodic meshes, fields, discrete calculus, quadrature.
//! - [`model`]: power-family Hamiltonians/couplings, Fenchel conjugates,
//!   coercivity maps and the sharp constant `c0`.
//! - [`hjb`] / [`fpk`]: monotone upwind solvers with implicit diffusion.
//! - [`fixpoint`]: damped Picard / policy iteration coupling the two.
//! - [`variational`]: the dual functionals, duality gap, mollified dual
//!   candidates.
//! - [`metrics`]: error norms, predicted exponents, rate fitting, W1 on the
//!   circle.
//! - [`scenarios`]: built-in presets, the ν-sweep driver, the KPZ change of
//!   variables.
//! - [`cli`]: config parsing, experiment execution, invariant suites, file
//!   emission.

pub mod cli;
mod diffusion;
pub mod fixpoint;
pub mod fpk;
pub mod grid;
pub mod hjb;
pub mod metrics;
pub mod model;
pub mod scenarios;
pub mod variational;

use thiserror::Error;

/// Errors shared by the PDE solvers and the fixed-point coupler.
#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error("CFL violated at step {step}: dt = {dt:.3e}, admissible dt = {admissible_dt:.3e}")]
    CflViolation {
        step: usize,
        dt: f64,
        admissible_dt: f64,
    },
    #[error(
        "a-priori CFL estimate rejects dt = {dt:.3e} (admissible {admissible_dt:.3e}); increase nt"
    )]
    CflEstimate { dt: f64, admissible_dt: f64 },
    #[error("non-finite value appeared at step {step}")]
    Diverged { step: usize },
    #[error("density dipped to {min:.3e} at step {step}; below the -1e-12 scheme-bug threshold")]
    NegativeDensity { step: usize, min: f64 },
    #[error("invalid solver input: {0}")]
    BadInput(String),
}
