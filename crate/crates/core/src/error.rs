//! Crate-wide error type.
//!
//! Everything that can go wrong while parsing, integrating, or assembling
//! certificates funnels into [`Error`] so that callers (in particular the
//! CLI) can map failures onto their exit-code contract without digging
//! through nested error types.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Expression source text failed to parse.
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },

    /// A well-formed expression hit an undefined value (log of a
    /// non-positive number, division by zero, non-finite result, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A variable was referenced that the evaluation context cannot supply.
    #[error("unbound variable `{0}`")]
    UnboundVar(String),

    /// A system definition (or other input document) violates its schema.
    #[error("validation error: {0}")]
    Validation(String),

    /// The adaptive integrator could not proceed: the step size underflowed
    /// at time `t`, which signals finite-time escape of the solution.
    #[error("step size underflow at t = {t}: solution escapes in finite time")]
    StepUnderflow { t: f64 },

    /// The integrator exceeded its step budget without reaching the end time.
    #[error("integrator exceeded {max_steps} steps at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge on [{a}, {b}] (error estimate {err:.3e} > tol {tol:.3e})")]
    QuadNonConvergence { a: f64, b: f64, err: f64, tol: f64 },

    /// An improper integral showed no numerical decay up to the cap, i.e.
    /// the integrand is not integrable as far as sampling can tell.
    #[error("no decay detected up to t = {t_cap}: integrand does not look integrable")]
    NoDecay { t_cap: f64 },

    /// A function that must be nonnegative evaluated negative on the grid.
    #[error("negative sample: {name}({t}) = {value}")]
    NegativeSample { name: String, t: f64, value: f64 },

    /// Envelope fitting produced a non-positive decay rate.
    #[error("fitted decay rate gamma = {gamma} is not positive: nominal system is not numerically exponentially stable")]
    NotExponentiallyStable { gamma: f64 },

    /// The perturbation parameter is at or above the certified threshold.
    #[error("eps = {eps} is not below the threshold eps_star = {eps_star}: no certificate")]
    EpsOverBudget { eps: f64, eps_star: f64 },

    /// No split point s kept the tail p-norm small enough.
    #[error("no split point s <= {s_cap} gives tail norm below {required}: hypothesis numerically unmet")]
    SplitPointNotFound { s_cap: f64, required: f64 },

    /// The free parameter r of the envelope must exceed r_min.
    #[error("r = {r} must exceed r_min = {r_min}")]
    RTooSmall { r: f64, r_min: f64 },

    /// The disturbance bound `|h| <= phi |x| + lambda` failed on a sample.
    #[error("disturbance bound unverified: margin {margin:.6e} > 0 at t = {t}")]
    DisturbanceBoundUnverified { margin: f64, t: f64 },

    /// sup_t e^(gamma_eps t) lambda(t) kept growing on the sampling window.
    #[error("e^(gamma_eps t) lambda(t) still growing at t = {t_sup}: decay hypothesis unverifiable")]
    LambdaDecayUnverifiable { t_sup: f64 },
}

impl Error {
    /// True for errors that mean "the theorem's hypotheses do not hold for
    /// these inputs" rather than "the computation itself broke".
    pub fn is_hypothesis_failure(&self) -> bool {
        matches!(
            self,
            Error::EpsOverBudget { .. }
                | Error::SplitPointNotFound { .. }
                | Error::RTooSmall { .. }
                | Error::DisturbanceBoundUnverified { .. }
                | Error::LambdaDecayUnverifiable { .. }
                | Error::NotExponentiallyStable { .. }
                | Error::NoDecay { .. }
        )
    }
}
