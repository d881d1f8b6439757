//! Numerical laboratory for negative-gradient flows of smooth scalar fields.
//!
//! The crate integrates `γ̇ = −∇f(γ)` with an adaptive Runge–Kutta pair,
//! locates and classifies critical points, traces invariant manifolds and
//! connections, and measures the quantities that govern convergence near
//! degenerate critical sets (Łojasiewicz exponents, tail-length rates,
//! normal bias, secant limits).

pub mod catalog;
pub mod critical;
pub mod error;
pub mod expr;
pub mod field;
pub mod flow;
pub mod loja;
pub mod manifold;
pub mod par;

pub use catalog::{CatalogEntry, CatalogField, ReferenceFacts};
pub use critical::{CriticalClass, CriticalPoint};
pub use error::{Error, Result};
pub use expr::{Expr, ExprError};
pub use field::{finite_diff_gradient, Domain, ScalarField};
pub use flow::{integrate_flow, IntegratorConfig, StopReason, Trajectory};
pub use manifold::CriticalManifoldModel;
pub use par::Execution;
