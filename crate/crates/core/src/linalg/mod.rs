//! Sparse and dense linear algebra used by the solver.
//!
//! * [`SparseMatrix`] — compressed sparse row storage with deterministic
//!   triplet assembly and a plain-text coordinate export;
//! * [`solve_spd`] — Jacobi-preconditioned conjugate gradients with a dense
//!   Cholesky fallback for small systems;
//! * [`sym_scale`] — symmetric diagonal scaling `Â = M^{-1/2} A M^{-1/2}`
//!   for diagonal (lumped) mass matrices;
//! * [`phi1_apply`] / [`expm_apply`] — Lanczos evaluation of `φ(−sÂ)v` and
//!   `exp(−sÂ)v` with full reorthogonalization and a dense
//!   eigendecomposition fallback;
//! * [`hminus_half_norm`] — a discrete surrogate for the `H^{-1/2}(Γ)` norm
//!   built from the generalized surface eigenproblem `K v = λ M v`.

mod fractional;
mod phi;
mod solve;
mod sparse;

pub use fractional::hminus_half_norm;
pub use phi::{expm_apply, phi1_apply, phi1_scalar};
pub use solve::{solve_spd, solve_spd_guess};
pub use sparse::{sym_scale, SparseMatrix};
