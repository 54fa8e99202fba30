//! Decay-envelope constants for the perturbed nonlinear system and
//! certificates checking them against integrated trajectories.
//!
//! For `x' = (A0 + eps F) x + h(t, x, eps)` with `|h| <= phi(t) |x| +
//! lambda(t, eps)`, `phi` in L^p, and `lambda(t) <= M' e^(-gamma_eps t)`,
//! every solution obeys
//!
//! ```text
//! |x(t)| <= L |x0| e^(-delta (t - t0)) + N e^(-theta t)
//! ```
//!
//! with the explicit constants
//!
//! ```text
//! delta = gamma_eps - K (p-1)/p M_s          (in (0, gamma_eps])
//! theta = delta - K M'/r                     (in (0, delta) for M' > 0)
//! L     = K e^(K (M_s/p + int_0^s phi))
//! N     = r L / K,     r > r_min = K M' / delta
//! ```
//!
//! where `M_s = (int_s^inf phi^p)^(1/p)` and the split point `s` is the
//! smallest one keeping `M_s` below `(gamma_eps/K) p/(p-1)`. Letting
//! `r -> r_min` yields the practical-stability ball of radius
//! `r_min L / K`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{EvalContext, ScalarExpr};
use crate::linalg::vec_norm;
use crate::ode::{integrate, quad, quad_improper, IntegratorConfig, Trajectory};
use crate::sysdef::SystemDef;
use crate::transition::PerturbationBudget;

/// Truncation tolerance for the improper integrals behind `M_s`; tight so
/// the exponentiated constants stay accurate to ~1e-12.
pub const DEFAULT_TAIL_TOL: f64 = 1e-13;

/// Window for the grid sup behind `M'`.
pub const DEFAULT_MPRIME_T_SUP: f64 = 1e3;

/// Sample budget for disturbance-bound verification.
pub const DEFAULT_A5_SAMPLES: usize = 4000;

/// Relative slack allowed when comparing trajectory norms against the
/// envelope.
pub const DEFAULT_CERT_TOL: f64 = 1e-6;

const VERIFY_SEED: u64 = 0x57AB_CE27;

// ---------------------------------------------------------------------------
// Disturbance bounds
// ---------------------------------------------------------------------------

/// The pair `(phi, lambda)` bounding the disturbance, with the derived
/// constant `M' = sup_t e^(gamma_eps t) lambda(t)`.
#[derive(Debug, Clone)]
pub struct DisturbanceBounds {
    pub phi: ScalarExpr,
    pub lam: ScalarExpr,
    pub p: f64,
    pub eps: f64,
    pub m_prime: f64,
    pub t_sup: f64,
    pub tail_tol: f64,
}

impl DisturbanceBounds {
    /// Build the bounds for one `eps`, computing `M'` as a grid sup over
    /// `[0, t_sup]` unless an analytic override is given. If the last
    /// decade of `e^(gamma_eps t) lambda(t)` still grows, the decay
    /// hypothesis is reported unverifiable.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        phi: ScalarExpr,
        lam: ScalarExpr,
        p: f64,
        eps: f64,
        gamma_eps: f64,
        t_sup: f64,
        tail_tol: f64,
        m_prime_override: Option<f64>,
    ) -> Result<DisturbanceBounds> {
        if !(p >= 1.0) {
            return Err(Error::Validation(format!("p = {p} must be at least 1")));
        }
        if !(t_sup > 0.0) {
            return Err(Error::Validation("t_sup must be positive".into()));
        }
        let m_prime = match m_prime_override {
            Some(v) => v,
            None => sup_weighted_lambda(&lam, eps, gamma_eps, t_sup)?,
        };
        Ok(DisturbanceBounds { phi, lam, p, eps, m_prime, t_sup, tail_tol })
    }

    /// Pull `(phi, lambda)` from system metadata, treating an absent pair
    /// as the zero functions (sound only for `h == 0`, which the
    /// disturbance-bound verification then confirms).
    pub fn from_system(
        sys: &SystemDef,
        p: f64,
        eps: f64,
        gamma_eps: f64,
        t_sup: f64,
        tail_tol: f64,
    ) -> Result<DisturbanceBounds> {
        let zero = ScalarExpr::Num(0.0);
        let phi = sys.meta.phi.clone().unwrap_or_else(|| zero.clone());
        let lam = sys.meta.lambda.clone().unwrap_or(zero);
        DisturbanceBounds::new(phi, lam, p, eps, gamma_eps, t_sup, tail_tol, sys.meta.m_prime)
    }

    fn phi_at(&self, t: f64) -> Result<f64> {
        let v = self.phi.eval(&EvalContext::time(t))?;
        if v < 0.0 {
            return Err(Error::NegativeSample { name: "phi".into(), t, value: v });
        }
        Ok(v)
    }
}

/// Grid sup of `e^(gamma_eps t) lambda(t)` with growth detection.
fn sup_weighted_lambda(lam: &ScalarExpr, eps: f64, gamma_eps: f64, t_sup: f64) -> Result<f64> {
    const CELLS: usize = 8192;
    let weighted = |t: f64| -> Result<f64> {
        let v = lam.eval(&EvalContext::time_eps(t, eps))?;
        if v < 0.0 {
            return Err(Error::NegativeSample { name: "lambda".into(), t, value: v });
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        // single exp of the combined exponent: e^(gamma t) alone overflows
        // long before the product does
        Ok((gamma_eps * t + v.ln()).exp())
    };

    let dt = t_sup / CELLS as f64;
    let mut best = f64::NEG_INFINITY;
    let mut best_t = 0.0;
    let mut last_decade_max = f64::NEG_INFINITY;
    let mut prev_decade_max = f64::NEG_INFINITY;
    for i in 0..=CELLS {
        let t = i as f64 * dt;
        let v = weighted(t)?;
        if v > best {
            best = v;
            best_t = t;
        }
        if t > t_sup / 10.0 {
            last_decade_max = last_decade_max.max(v);
        } else if t > t_sup / 100.0 {
            prev_decade_max = prev_decade_max.max(v);
        }
    }
    if last_decade_max > prev_decade_max && last_decade_max > 0.0 {
        return Err(Error::LambdaDecayUnverifiable { t_sup });
    }

    // golden-section refinement around the best cell
    let mut lo = (best_t - dt).max(0.0);
    let mut hi = (best_t + dt).min(t_sup);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = weighted(x1)?;
    let mut f2 = weighted(x2)?;
    for _ in 0..80 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = weighted(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = weighted(x2)?;
        }
    }
    Ok(best.max(f1).max(f2))
}

// ---------------------------------------------------------------------------
// Disturbance-bound verification
// ---------------------------------------------------------------------------

/// Result of sampling `|h(t,x,eps)| - (phi(t) |x| + lambda(t,eps))`.
#[derive(Debug, Clone)]
pub struct A5Report {
    /// Max margin over all samples; nonpositive means verified.
    pub max_margin: f64,
    pub worst_t: f64,
    pub worst_x: Vec<f64>,
    pub samples: usize,
    pub verified: bool,
}

/// Sample the disturbance bound over a box grid plus seeded random draws.
/// Report-only: a positive margin marks the bound unverified.
pub fn verify_a5(
    sys: &SystemDef,
    eps: f64,
    phi: &ScalarExpr,
    lam: &ScalarExpr,
    sample_budget: usize,
) -> Result<A5Report> {
    const T_MAX: f64 = 20.0;
    const X_MAX: f64 = 10.0;

    let mut report = A5Report {
        max_margin: f64::NEG_INFINITY,
        worst_t: 0.0,
        worst_x: vec![0.0; sys.n],
        samples: 0,
        verified: false,
    };

    let mut probe = |t: f64, x: &[f64], report: &mut A5Report| -> Result<()> {
        let h = sys.h_at(t, x, eps)?;
        let phi_v = phi.eval(&EvalContext::time(t))?;
        let lam_v = lam.eval(&EvalContext::time_eps(t, eps))?;
        let margin = vec_norm(&h) - (phi_v * vec_norm(x) + lam_v);
        report.samples += 1;
        if margin > report.max_margin {
            report.max_margin = margin;
            report.worst_t = t;
            report.worst_x = x.to_vec();
        }
        Ok(())
    };

    // box grid: 21 time points x 9 points per state dimension (3 when the
    // dimension makes the product explode)
    let per_dim = if sys.n <= 3 { 9usize } else { 3 };
    let combos = per_dim.pow(sys.n as u32);
    for it in 0..=20 {
        let t = T_MAX * it as f64 / 20.0;
        for combo in 0..combos {
            let mut x = vec![0.0; sys.n];
            let mut rem = combo;
            for xi in x.iter_mut() {
                let idx = rem % per_dim;
                rem /= per_dim;
                *xi = -X_MAX + 2.0 * X_MAX * idx as f64 / (per_dim - 1) as f64;
            }
            probe(t, &x, &mut report)?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED);
    for _ in 0..sample_budget {
        let t = rng.gen_range(0.0..=T_MAX);
        let x: Vec<f64> = (0..sys.n).map(|_| rng.gen_range(-X_MAX..=X_MAX)).collect();
        probe(t, &x, &mut report)?;
    }

    report.verified = report.max_margin <= 0.0;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Theorem constants
// ---------------------------------------------------------------------------

/// Choice of the free parameter `r`.
#[derive(Debug, Clone, Copy)]
pub enum RChoice {
    /// `2 r_min`, which keeps `theta = delta / 2` when the `M_s` correction
    /// vanishes; collapses to the `r -> 0` limit when `M' = 0`.
    Auto,
    Given(f64),
}

/// Choice of the perturbed-envelope constant `K`.
#[derive(Debug, Clone, Copy)]
pub enum KChoice {
    /// `K = c + 1` from the linear theorem.
    Theorem,
    /// A certified direct bound (e.g. from a logarithmic-norm argument).
    Override(f64),
}

/// The full constant set of the decay envelope.
#[derive(Debug, Clone)]
pub struct TheoremConstants {
    pub eps: f64,
    /// Envelope constant `K` of the perturbed linear part.
    pub k_env: f64,
    pub k_env_overridden: bool,
    pub gamma_eps: f64,
    /// `sup_t |F(t)|`.
    pub k: f64,
    pub p: f64,
    pub s: f64,
    pub m_s: f64,
    pub m_prime: f64,
    /// `int_0^s phi`.
    pub phi_head: f64,
    pub r: f64,
    pub r_min: f64,
    pub delta: f64,
    pub theta: f64,
    pub l: f64,
    pub n: f64,
}

impl TheoremConstants {
    /// Arithmetic consistency of the constant set.
    pub fn check_invariants(&self) -> Result<()> {
        let ok = self.delta > 0.0
            && self.delta <= self.gamma_eps
            && self.theta > 0.0
            && self.theta <= self.delta
            && (self.m_prime == 0.0 || self.theta < self.delta)
            && self.l >= self.k_env
            && (self.r == 0.0 || self.n == self.r * self.l / self.k_env)
            && (self.m_prime == 0.0 || self.r > self.r_min);
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("inconsistent constants: {self:?}")))
        }
    }

    /// True when the envelope certifies convergence to the origin itself.
    pub fn certifies_origin(&self) -> bool {
        self.n == 0.0
    }

    /// Radius of the certified practical-stability ball (`r -> r_min`).
    pub fn practical_ball_radius(&self) -> f64 {
        self.r_min * self.l / self.k_env
    }

    /// Uniform bound on `|x(t)|` for `|x0| <= x0_norm` (global uniform
    /// boundedness constant).
    pub fn uniform_bound(&self, x0_norm: f64) -> f64 {
        self.l * x0_norm + self.n
    }
}

/// Smallest split point on the doubling grid `{0, 1, 2, 4, ...}` keeping
/// the tail norm `M_s` below `(gamma_eps/K) p/(p-1)`; vacuous for `p = 1`
/// where `s = 0` and `M_s = int_0^inf phi`.
pub fn choose_s(dist: &DisturbanceBounds, gamma_eps: f64, k_env: f64) -> Result<(f64, f64)> {
    let p = dist.p;
    let m_s_at = |s: f64| -> Result<f64> {
        let tail = quad_improper(|t| dist.phi_at(t).map(|v| v.powf(p)), s, dist.tail_tol)?;
        Ok(if p == 1.0 { tail.value } else { tail.value.powf(1.0 / p) })
    };

    if p == 1.0 {
        return Ok((0.0, m_s_at(0.0)?));
    }

    let required = (gamma_eps / k_env) * p / (p - 1.0);
    const S_CAP: f64 = 4096.0;
    let mut s = 0.0;
    loop {
        let m_s = m_s_at(s)?;
        if m_s < required {
            return Ok((s, m_s));
        }
        s = if s == 0.0 { 1.0 } else { s * 2.0 };
        if s > S_CAP {
            return Err(Error::SplitPointNotFound { s_cap: S_CAP, required });
        }
    }
}

/// Assemble the full constant set for one `eps`.
pub fn compute_constants(
    budget: &PerturbationBudget,
    dist: &DisturbanceBounds,
    eps: f64,
    r: RChoice,
    k_env: KChoice,
) -> Result<TheoremConstants> {
    let gamma_eps = budget.gamma_eps(eps);
    if !(gamma_eps > 0.0) {
        return Err(Error::EpsOverBudget {
            eps,
            eps_star: budget.eps_star.unwrap_or(f64::INFINITY),
        });
    }
    let (k_env_v, overridden) = match k_env {
        KChoice::Theorem => (budget.k_env, false),
        KChoice::Override(v) => {
            if !(v > 0.0) {
                return Err(Error::Validation(format!("K override {v} must be positive")));
            }
            (v, true)
        }
    };

    let (s, m_s) = choose_s(dist, gamma_eps, k_env_v)?;
    let p = dist.p;
    let delta = gamma_eps - k_env_v * m_s * (p - 1.0) / p;
    if !(delta > 0.0) {
        return Err(Error::SplitPointNotFound {
            s_cap: s,
            required: (gamma_eps / k_env_v) * p / (p - 1.0),
        });
    }

    let phi_head = if s > 0.0 {
        quad(|t| dist.phi_at(t), 0.0, s, dist.tail_tol.max(1e-13))?
    } else {
        0.0
    };
    let l = k_env_v * (k_env_v * (m_s / p + phi_head)).exp();

    let m_prime = dist.m_prime;
    let r_min = k_env_v * m_prime / delta;
    let (r_v, n, theta) = if m_prime == 0.0 {
        match r {
            // r -> 0 limit: no forcing, the envelope reduces to pure decay
            RChoice::Auto => (0.0, 0.0, delta),
            RChoice::Given(rv) => {
                if !(rv > 0.0) {
                    return Err(Error::RTooSmall { r: rv, r_min });
                }
                (rv, rv * l / k_env_v, delta)
            }
        }
    } else {
        let rv = match r {
            RChoice::Auto => 2.0 * r_min,
            RChoice::Given(rv) => {
                if rv <= r_min {
                    return Err(Error::RTooSmall { r: rv, r_min });
                }
                rv
            }
        };
        (rv, rv * l / k_env_v, delta - k_env_v * m_prime / rv)
    };
    if !(theta > 0.0) {
        return Err(Error::RTooSmall { r: r_v, r_min });
    }

    let tc = TheoremConstants {
        eps,
        k_env: k_env_v,
        k_env_overridden: overridden,
        gamma_eps,
        k: budget.k,
        p,
        s,
        m_s,
        m_prime,
        phi_head,
        r: r_v,
        r_min,
        delta,
        theta,
        l,
        n,
    };
    tc.check_invariants()?;
    Ok(tc)
}

/// `L |x0| e^(-delta (t - t0)) + N e^(-theta t)`.
pub fn envelope_value(tc: &TheoremConstants, x0_norm: f64, t0: f64, t: f64) -> f64 {
    debug_assert!(t >= t0);
    tc.l * x0_norm * (-tc.delta * (t - t0)).exp() + tc.n * (-tc.theta * t).exp()
}

/// Practical-stability ball radius from the `r -> r_min` limit.
pub fn practical_ball(tc: &TheoremConstants) -> f64 {
    tc.practical_ball_radius()
}

/// The single-exponential bound constant `P = L + N/r` valid outside the
/// ball `B_r`.
pub fn corollary_bound(tc: &TheoremConstants, r: f64) -> Result<f64> {
    if tc.m_prime > 0.0 && r <= tc.r_min {
        return Err(Error::RTooSmall { r, r_min: tc.r_min });
    }
    Ok(tc.l + tc.n / r)
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

/// Verdict of checking the envelope against an integrated trajectory.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub system: String,
    pub eps: f64,
    pub t0: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub envelope: Vec<f64>,
    pub max_ratio: f64,
    pub pass: bool,
    pub first_violation_t: Option<f64>,
    /// Radius `N` of the ball the envelope settles into.
    pub ball_radius: f64,
    /// First sampled time with `|x| <= N`.
    pub ball_entry_t: Option<f64>,
    pub tolerance: f64,
    pub escape: Option<f64>,
}

impl Certificate {
    /// The envelope certifies the origin itself and the trajectory confirms.
    pub fn exponential_stability_confirmed(&self, tc: &TheoremConstants) -> bool {
        self.pass && tc.certifies_origin()
    }

    /// The envelope certifies a practical ball and the trajectory confirms.
    pub fn practical_stability_confirmed(&self, tc: &TheoremConstants) -> bool {
        self.pass && tc.n > 0.0
    }
}

/// Integrate the full nonlinear system and compare its norm against the
/// envelope on the dense grid.
pub fn certify(
    sys: &SystemDef,
    eps: f64,
    tc: &TheoremConstants,
    t0: f64,
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<Certificate> {
    let traj = integrate(sys.rhs(), &sys.x0, t0, tf, eps, cfg)?;
    Ok(certificate_from_trajectory(&sys.name, eps, tc, &traj, DEFAULT_CERT_TOL))
}

/// Build the certificate for an already-integrated trajectory.
pub fn certificate_from_trajectory(
    system: &str,
    eps: f64,
    tc: &TheoremConstants,
    traj: &Trajectory,
    tolerance: f64,
) -> Certificate {
    let x0_norm = vec_norm(&traj.states[0]);
    let norms = traj.norms();
    let envelope: Vec<f64> = traj
        .times
        .iter()
        .map(|&t| envelope_value(tc, x0_norm, traj.t0, t))
        .collect();

    let mut max_ratio = 0.0_f64;
    let mut first_violation_t = None;
    let mut ball_entry_t = None;
    for ((t, nrm), env) in traj.times.iter().zip(&norms).zip(&envelope) {
        let ratio = if *env > 0.0 {
            nrm / env
        } else if *nrm == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        max_ratio = max_ratio.max(ratio);
        if ratio > 1.0 + tolerance && first_violation_t.is_none() {
            first_violation_t = Some(*t);
        }
        if *nrm <= tc.n && ball_entry_t.is_none() {
            ball_entry_t = Some(*t);
        }
    }

    let pass = traj.escape.is_none() && max_ratio <= 1.0 + tolerance;
    Certificate {
        system: system.to_string(),
        eps,
        t0: traj.t0,
        times: traj.times.clone(),
        norms,
        envelope,
        max_ratio,
        pass,
        first_violation_t,
        ball_radius: tc.n,
        ball_entry_t,
        tolerance,
        escape: traj.escape,
    }
}

/// Trajectory summary for parameters outside the certified range: no
/// envelope is claimed, only the observed growth rate is reported.
#[derive(Debug, Clone)]
pub struct ObserveReport {
    pub final_norm: f64,
    /// Least-squares slope of `log |x(t)|`; positive means growth.
    pub growth_rate: f64,
    pub escape: Option<f64>,
}

pub fn observe(
    sys: &SystemDef,
    eps: f64,
    t0: f64,
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<ObserveReport> {
    let traj = integrate(sys.rhs(), &sys.x0, t0, tf, eps, cfg)?;
    Ok(observe_from_trajectory(&traj))
}

pub fn observe_from_trajectory(traj: &Trajectory) -> ObserveReport {
    if traj.escape.is_some() {
        return ObserveReport {
            final_norm: traj.final_norm(),
            growth_rate: f64::INFINITY,
            escape: traj.escape,
        };
    }
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let nrm = vec_norm(s);
        if nrm > 1e-300 {
            ts.push(*t);
            logs.push(nrm.ln());
        }
    }
    let growth_rate = if ts.len() < 2 {
        0.0
    } else {
        let n = ts.len() as f64;
        let mt = ts.iter().sum::<f64>() / n;
        let ml = logs.iter().sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (t, lg) in ts.iter().zip(&logs) {
            sxx += (t - mt) * (t - mt);
            sxy += (t - mt) * (lg - ml);
        }
        sxy / sxx
    };
    ObserveReport { final_norm: traj.final_norm(), growth_rate, escape: traj.escape }
}
