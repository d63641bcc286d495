//! Numerical toolkit for double-phase (and multi-phase) Poisson problems with
//! variable exponents,
//!
//! ```text
//! -div(|∇w|^{p(x)-2} ∇w + Σ_j μ_j(x) |∇w|^{q_j(x)-2} ∇w) = f   in Ω,
//!                                                    w = φ   on ∂Ω.
//! ```
//!
//! The crate is organized bottom-up:
//!
//! * [`mesh`]: uniform 1D/2D grids, nodal fields, cell-centered gradients and
//!   midpoint quadrature.
//! * [`expr`]: the expression language used to describe `p`, `q_j`, `μ_j`,
//!   `f` and `φ` in configuration files.
//! * [`phase`]: sampled Musielak–Orlicz integrands `H(x, t)`.
//! * [`modular`]: modulars, Luxemburg norms and the norm/modular diagnostics.
//! * [`convexity`]: the uniform-convexity machinery and the pointwise
//!   inequalities behind uniqueness.
//! * [`solver`]: energy minimization, weak residuals and uniqueness
//!   certificates.
//! * [`sweep`]: seeded randomized verification sweeps shared by the CLI and
//!   the test-suite.
//! * [`cli`]: configuration, subcommands and report emission for the `dphase`
//!   binary.

pub mod cli;
pub mod convexity;
pub mod expr;
mod linalg;
pub mod mesh;
pub mod modular;
pub mod phase;
pub mod solver;
pub mod sweep;

pub use convexity::{ConvexityReport, Verdict};
pub use mesh::{GradientField, Grid, ScalarField};
pub use modular::{ModularKind, ModularReport};
pub use phase::{ExponentSummary, PhaseStructure};
pub use solver::{Problem, Solution, SolverOptions};
