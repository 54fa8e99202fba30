//! Stability certification for perturbed time-varying linear systems.
//!
//! Given a system `x' = A0(t) x + eps F(t) x + h(t, x, eps)` whose nominal
//! part is exponentially stable, this crate computes how much perturbation
//! the stability survives and with what explicit constants:
//!
//! - [`expr`]: the scalar expression DSL used to define systems;
//! - [`ode`]: adaptive Runge-Kutta integration and quadrature;
//! - [`sysdef`]: the system-definition data model and built-in examples;
//! - [`gronwall`]: the extended Gronwall-Bellman bound and the L^p
//!   linear-growth bound, with equality-case oracles;
//! - [`transition`]: transition matrices, the perturbation series in eps,
//!   exponential envelopes, and the eps threshold;
//! - [`stability`]: the full constant set of the decay envelope
//!   `|x(t)| <= L |x0| e^(-delta (t-t0)) + N e^(-theta t)`, practical
//!   stability balls, and certificates checking envelopes against
//!   numerically integrated trajectories.

pub mod error;
pub mod expr;
pub mod gronwall;
pub mod linalg;
pub mod ode;
pub mod stability;
pub mod sysdef;
pub mod transition;

pub use error::{Error, Result};
