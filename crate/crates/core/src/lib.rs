//! Finite-element library for parabolic problems with dynamic boundary
//! conditions on two-dimensional domains.
//!
//! The library discretises problems of the form
//!
//! ```text
//!     ∂_t u = Δu + f_Ω(u)                                  in Ω,
//!   μ ∂_t u = β Δ_Γ u − κ u + μ f_Γ(u) − ∂_ν u             on Γ = ∂Ω,
//! ```
//!
//! with piecewise-linear finite elements on triangulations whose boundary
//! edges double as a one-dimensional surface mesh.  It provides
//!
//! * mesh generation for the unit square and the unit disk, uniform red
//!   refinement and a plain-text exchange format ([`mesh`]);
//! * assembly of the coupled bulk–surface mass and stiffness matrices with
//!   consistent or lumped quadrature, loads and semi-linear terms
//!   ([`assembly`]);
//! * sparse/dense linear algebra: CSR matrices, preconditioned conjugate
//!   gradients, Lanczos-based `φ`/`exp` matrix-function application and a
//!   discrete fractional surface norm ([`linalg`]);
//! * time integration: BDF 1–5 (including non-autonomous and semi-linear
//!   variants), exponential Euler and four bulk–surface splitting schemes
//!   ([`integrators`]);
//! * Ritz projections, error norms and convergence-order tables ([`ritz`]);
//! * an executable check of the splitting stability bound ([`stability`]);
//! * manufactured-solution problem definitions ([`problems`]).

pub mod assembly;
pub mod error;
pub mod integrators;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod report;
pub mod ritz;
pub mod stability;
pub mod study;

pub use error::{Error, Result};
