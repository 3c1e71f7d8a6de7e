//! Fibering-method solver for the (p,q)-Laplacian eigenvalue problem
//!
//! ```text
//! -Δ_p u - Δ_q u = λ K(x) |u|^{p-2} u   in the exterior of a ball,
//!              u = 0                    on the inner sphere,
//!              u → 0                    as |x| → ∞,
//! ```
//!
//! restricted to radial functions on a truncated shell `r_inner < r < r_outer`.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] – radial discretisation, quadrature with the `r^{N-1}` measure,
//!   two-point gradients and weight sampling.
//! * [`functionals`] – `H_λ`, `G`, `J_λ`, the fibered functional `J̃_λ`, the
//!   fiber scale `t_v`, Luxemburg norms and residual diagnostics.
//! * [`eigensolver`] – the principal eigenpair `(λ₁(p), φ₁)` of the weighted
//!   p-Laplacian by preconditioned Rayleigh-quotient descent.
//! * [`fibering`] – minimisation of `J̃_λ` on `W_λ = {H_λ < 0, G = 1}` and the
//!   reconstruction `u_λ = t_v v`.
//! * [`sweep`] – λ-ladders, asymptotic verdicts and CSV/JSON/SVG output.
//! * [`oracle`] – brute-force and linear-algebra cross-checks on tiny grids.
//! * [`verify`] – the oracle and invariant suite behind `verify`.
//! * [`cli`] – configuration, subcommands and the exit-code contract.

// `!(x > 0.0)` style tests are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod eigensolver;
pub mod error;
pub mod fibering;
pub mod functionals;
pub mod grid;
pub mod linesearch;
pub mod numeric;
pub mod oracle;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
pub use functionals::ProblemSpec;
pub use grid::{GridFunction, RadialGrid, Spacing, WeightField, WeightKind};
