//! Twisted-type fully nonlinear elliptic operators: calculus, structure
//! verification, convex envelope extensions, a finite-difference Dirichlet
//! solver on 2-D grids, and the interior-estimate diagnostics built on top
//! of them.
//!
//! The operator class is `F(D^2 u) = F_cup(D^2 u) + F_cap(D^2 u)` with
//! `F_cup` convex and uniformly elliptic and `F_cap` weakly concave (an
//! increasing concave gauge `G` makes `G(F_cap(.))` concave). The central
//! fact the diagnostics revolve around is that `G(F_cap(D^2 u))` is a
//! supersolution of the linearized equation along solutions; the modules
//! here make that and its consequences checkable numerically:
//!
//! * [`operators`] — symmetric-matrix calculus, the sigma_k family, block
//!   determinant roots, gauges, presets.
//! * [`structure`] — sampling-based certificates for the structural
//!   conditions (ellipticity, convexity, weak concavity).
//! * [`envelope`] — the band-restricted convex envelope extension and its
//!   two-sided ellipticity sandwich.
//! * [`solver`] — damped-Newton Dirichlet solver on uniform grids over
//!   `[-1, 1]^2`, square or ball masked.
//! * [`estimates`] — supersolution residuals, dyadic oscillation scans,
//!   discrete Holder seminorms, quadratic approximation and the rigidity
//!   diagnostic.
//!
//! Everything numeric is generic over the scalar type through
//! [`scalar::Real`]; the aliases below fix `f64`, which is what the CLI and
//! the acceptance suite use.

pub mod envelope;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod operators;
pub mod sampling;
pub mod scalar;
pub mod solver;
pub mod structure;
pub mod sym;

pub use error::{Error, Result};
pub use scalar::Real;

/// Schema version stamped into every serialized report.
pub const SCHEMA_VERSION: u32 = 1;

/// Concrete `f64` aliases for the main types.
pub type SymMatrix64 = sym::SymMatrix<f64>;
pub type OpHessian64 = sym::OpHessian<f64>;
pub type Sym3Tensor64 = sym::Sym3Tensor<f64>;
pub type TwistedOperator64 = operators::TwistedOperator<f64>;
pub type MatrixFn64 = operators::MatrixFn<f64>;
pub type DomainSet64 = operators::DomainSet<f64>;
pub type EnvelopeSet64 = envelope::EnvelopeSet<f64>;
pub type EnvelopeApprox64 = envelope::EnvelopeApprox<f64>;
pub type GridField64 = grid::GridField<f64>;
pub type SolveConfig64 = solver::SolveConfig<f64>;
