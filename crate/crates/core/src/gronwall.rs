//! Extended Gronwall-Bellman bound and L^p linear-growth bound.
//!
//! For nonnegative `u, v, w` with
//! `u(t) <= c + int_a^t (u v + w)`, the bound
//!
//! ```text
//! u(t) <= c e^(int_a^t v) + r e^(int_a^t (v + w/r))      for every r > 0
//! ```
//!
//! holds. The maximal admissible `u` solves the equality ODE
//! `u' = u v + w`, `u(a) = c`, which is what [`GronwallInstance::oracle`]
//! integrates; testing the oracle against the bound covers all admissible
//! `u`.
//!
//! The companion bound turns an L^p function `phi` into the linear
//! estimate `int_{t0}^t phi <= N + L (t - t0)` with
//! `N = int_0^s phi + M_s / p`, `L = (p-1)/p * M_s`, and
//! `M_s = (int_s^inf phi^p)^(1/p)`.

use crate::error::{Error, Result};
use crate::expr::{EvalContext, ScalarExpr};
use crate::ode::{integrate, quad, quad_improper, IntegratorConfig, Trajectory};

/// A nonnegative scalar function of time: an expression in `t` or a
/// piecewise-constant table.
#[derive(Debug, Clone)]
pub enum TimeFn {
    Expr(ScalarExpr),
    /// `values[i]` on `[breaks[i], breaks[i+1])`; the last value extends to
    /// infinity and the first applies before `breaks[0]`.
    Steps { breaks: Vec<f64>, values: Vec<f64> },
}

impl TimeFn {
    pub fn constant(v: f64) -> TimeFn {
        TimeFn::Steps { breaks: vec![0.0], values: vec![v] }
    }

    pub fn parse(src: &str) -> Result<TimeFn> {
        let e = ScalarExpr::parse(src)?;
        if e.uses_state() || e.uses_eps() {
            return Err(Error::Validation(format!(
                "time function `{src}` may reference t only"
            )));
        }
        Ok(TimeFn::Expr(e))
    }

    pub fn steps(breaks: Vec<f64>, values: Vec<f64>) -> Result<TimeFn> {
        if breaks.is_empty() || breaks.len() != values.len() {
            return Err(Error::Validation(
                "piecewise table needs equally many breaks and values".into(),
            ));
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("piecewise breaks must increase".into()));
        }
        Ok(TimeFn::Steps { breaks, values })
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            TimeFn::Expr(e) => e.eval(&EvalContext::time(t)),
            TimeFn::Steps { breaks, values } => {
                let idx = match breaks.binary_search_by(|b| b.partial_cmp(&t).unwrap()) {
                    Ok(i) => i,
                    Err(0) => 0,
                    Err(i) => i - 1,
                };
                Ok(values[idx])
            }
        }
    }

    /// Integral over `[a, b]`: adaptive quadrature for expressions, exact
    /// piece sums for tables.
    pub fn integral(&self, a: f64, b: f64, tol: f64) -> Result<f64> {
        match self {
            TimeFn::Expr(e) => quad(|t| e.eval(&EvalContext::time(t)), a, b, tol),
            TimeFn::Steps { breaks, values } => {
                let mut acc = 0.0;
                for (i, &v) in values.iter().enumerate() {
                    let lo = if i == 0 { f64::NEG_INFINITY } else { breaks[i] };
                    let hi = breaks.get(i + 1).copied().unwrap_or(f64::INFINITY);
                    let lo = lo.max(a);
                    let hi = hi.min(b);
                    if hi > lo {
                        acc += v * (hi - lo);
                    }
                }
                Ok(acc)
            }
        }
    }

    /// Error if the function evaluates negative anywhere on the check grid
    /// over `[a, b]` (tables are checked exactly).
    fn check_nonnegative(&self, a: f64, b: f64, name: &str) -> Result<()> {
        match self {
            TimeFn::Steps { breaks, values } => {
                for (bk, v) in breaks.iter().zip(values) {
                    if *v < 0.0 {
                        return Err(Error::NegativeSample { name: name.into(), t: *bk, value: *v });
                    }
                }
                Ok(())
            }
            TimeFn::Expr(_) => {
                const GRID: usize = 256;
                for i in 0..=GRID {
                    let t = a + (b - a) * (i as f64) / (GRID as f64);
                    let v = self.eval(t)?;
                    if v < 0.0 {
                        return Err(Error::NegativeSample { name: name.into(), t, value: v });
                    }
                }
                Ok(())
            }
        }
    }
}

/// One instance of the integral inequality.
#[derive(Debug, Clone)]
pub struct GronwallInstance {
    pub a: f64,
    pub c: f64,
    pub r: f64,
    pub v: TimeFn,
    pub w: TimeFn,
}

const QUAD_TOL: f64 = 1e-10;

impl GronwallInstance {
    pub fn new(a: f64, c: f64, r: f64, v: TimeFn, w: TimeFn) -> Result<GronwallInstance> {
        if !(c >= 0.0) {
            return Err(Error::Validation(format!("c = {c} must be nonnegative")));
        }
        if !(r > 0.0) {
            return Err(Error::Validation(format!("r = {r} must be positive")));
        }
        Ok(GronwallInstance { a, c, r, v, w })
    }

    /// The bound `c e^(int v) + r e^(int (v + w/r))` at time `t`.
    pub fn bound(&self, t: f64) -> Result<f64> {
        if t < self.a {
            return Err(Error::Validation(format!("t = {t} must be at least a = {}", self.a)));
        }
        self.v.check_nonnegative(self.a, t, "v")?;
        self.w.check_nonnegative(self.a, t, "w")?;
        let iv = self.v.integral(self.a, t, QUAD_TOL)?;
        let iw = self.w.integral(self.a, t, QUAD_TOL)?;
        Ok(self.c * iv.exp() + self.r * (iv + iw / self.r).exp())
    }

    /// The bound on a whole grid of times, computed from cumulative
    /// integrals so a length-m grid costs m panel integrals, not m^2.
    pub fn bound_on_grid(&self, grid: &[f64]) -> Result<Vec<f64>> {
        if grid.is_empty() {
            return Ok(Vec::new());
        }
        let tf = *grid.last().unwrap();
        self.v.check_nonnegative(self.a, tf, "v")?;
        self.w.check_nonnegative(self.a, tf, "w")?;
        let mut out = Vec::with_capacity(grid.len());
        let mut iv = 0.0;
        let mut iw = 0.0;
        let mut prev = self.a;
        for &t in grid {
            if t < prev {
                return Err(Error::Validation("grid times must be nondecreasing and >= a".into()));
            }
            iv += self.v.integral(prev, t, QUAD_TOL)?;
            iw += self.w.integral(prev, t, QUAD_TOL)?;
            out.push(self.c * iv.exp() + self.r * (iv + iw / self.r).exp());
            prev = t;
        }
        Ok(out)
    }

    /// Numerical solution of the equality ODE `u' = u v + w`, `u(a) = c`:
    /// the maximal function satisfying the inequality.
    pub fn oracle(&self, tf: f64, cfg: &IntegratorConfig) -> Result<Trajectory> {
        let rhs = |t: f64, u: &[f64], _eps: f64, out: &mut [f64]| -> Result<()> {
            out[0] = u[0] * self.v.eval(t)? + self.w.eval(t)?;
            Ok(())
        };
        integrate(rhs, &[self.c], self.a, tf, 0.0, cfg)
    }
}

/// Result of minimizing the Gronwall bound over the free parameter.
#[derive(Debug, Clone, Copy)]
pub struct ROptimum {
    pub r_opt: f64,
    pub bound: f64,
}

/// Search domain for `log10 r`.
const LOG_R_RANGE: (f64, f64) = (-6.0, 6.0);

/// Golden-section search for the `r` minimizing the bound at a single
/// horizon `t`. The bound is unimodal in `r` (sum of a constant and
/// `r e^(iv + iw/r)`), and with `w == 0` it decreases toward the lower
/// search edge, which is then returned.
pub fn optimize_r(a: f64, c: f64, v: &TimeFn, w: &TimeFn, t: f64) -> Result<ROptimum> {
    if !(t > a) {
        return Err(Error::Validation(format!("horizon t = {t} must exceed a = {a}")));
    }
    v.check_nonnegative(a, t, "v")?;
    w.check_nonnegative(a, t, "w")?;
    let iv = v.integral(a, t, QUAD_TOL)?;
    let iw = w.integral(a, t, QUAD_TOL)?;
    let bound_at = |log_r: f64| -> f64 {
        let r = 10f64.powf(log_r);
        c * iv.exp() + r * (iv + iw / r).exp()
    };

    let (mut lo, mut hi) = LOG_R_RANGE;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = bound_at(x1);
    let mut f2 = bound_at(x2);
    for _ in 0..200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = bound_at(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = bound_at(x2);
        }
    }
    let log_r = 0.5 * (lo + hi);
    Ok(ROptimum { r_opt: 10f64.powf(log_r), bound: bound_at(log_r) })
}

/// Constants of the L^p linear-growth bound.
#[derive(Debug, Clone, Copy)]
pub struct LpBound {
    pub p: f64,
    pub s: f64,
    /// Tail p-norm `(int_s^inf phi^p)^(1/p)` (conservative upper value).
    pub m_s: f64,
    /// `int_0^s phi + M_s / p`.
    pub n: f64,
    /// `(p-1)/p * M_s`; zero when p = 1.
    pub l: f64,
    /// `N + L (t - t0)`.
    pub bound: f64,
}

/// Compute `N`, `L`, `M_s` for `phi` and the bound value at `t`.
///
/// `tail_tol` controls the truncation of the improper integrals; the
/// returned `m_s` is an upper value, so the bound stays sound.
pub fn lp_linear_bound<F>(mut phi: F, p: f64, s: f64, t0: f64, t: f64, tail_tol: f64) -> Result<LpBound>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(p >= 1.0) {
        return Err(Error::Validation(format!("p = {p} must be at least 1")));
    }
    if !(s >= 0.0) {
        return Err(Error::Validation(format!("s = {s} must be nonnegative")));
    }
    if !(t0 >= 0.0 && t >= t0) {
        return Err(Error::Validation(format!("need 0 <= t0 <= t, got t0 = {t0}, t = {t}")));
    }

    let mut phi_checked = |tau: f64| -> Result<f64> {
        let v = phi(tau)?;
        if v < 0.0 {
            return Err(Error::NegativeSample { name: "phi".into(), t: tau, value: v });
        }
        Ok(v)
    };

    let tail = quad_improper(|tau| phi_checked(tau).map(|v| v.powf(p)), s, tail_tol)?;
    let m_s = tail.value.powf(1.0 / p);
    let head = if s > 0.0 {
        quad(&mut phi_checked, 0.0, s, tail_tol.max(1e-13))?
    } else {
        0.0
    };
    let n = head + m_s / p;
    let l = (p - 1.0) / p * m_s;
    Ok(LpBound { p, s, m_s, n, l, bound: n + l * (t - t0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn consts(a: f64, c: f64, r: f64, v: f64, w: f64) -> GronwallInstance {
        GronwallInstance::new(a, c, r, TimeFn::constant(v), TimeFn::constant(w)).unwrap()
    }

    #[test]
    fn bound_with_empty_integrals() {
        let inst = consts(0.0, 1.0, 1.0, 0.0, 0.0);
        for t in [0.0, 1.0, 17.5] {
            assert_abs_diff_eq!(inst.bound(t).unwrap(), 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn bound_closed_form_v_only() {
        // c e^t + r e^t at t = 1: (2 + 0.001) e
        let inst = consts(0.0, 2.0, 0.001, 1.0, 0.0);
        let expect = 2.001 * std::f64::consts::E;
        assert_abs_diff_eq!(inst.bound(1.0).unwrap(), expect, epsilon = 1e-8);
    }

    #[test]
    fn bound_closed_form_w_only_and_oracle_below() {
        // bound = r e^(t/r) = e at t = 1, r = 1; oracle solves u' = w => u = t
        let inst = consts(0.0, 0.0, 1.0, 0.0, 1.0);
        let bound = inst.bound(1.0).unwrap();
        assert_abs_diff_eq!(bound, std::f64::consts::E, epsilon = 1e-10);
        let traj = inst.oracle(1.0, &IntegratorConfig::default()).unwrap();
        let u1 = traj.states.last().unwrap()[0];
        assert_abs_diff_eq!(u1, 1.0, epsilon = 1e-9);
        assert!(u1 <= bound);
    }

    #[test]
    fn bound_from_expression_inputs() {
        let inst = GronwallInstance::new(
            0.0,
            1.0,
            0.5,
            TimeFn::parse("1/(1+t)").unwrap(),
            TimeFn::parse("exp(-t)").unwrap(),
        )
        .unwrap();
        // int_0^2 v = ln 3, int_0^2 w = 1 - e^-2
        let iv = 3f64.ln();
        let iw = 1.0 - (-2f64).exp();
        let expect = iv.exp() + 0.5 * (iv + iw / 0.5).exp();
        assert_abs_diff_eq!(inst.bound(2.0).unwrap(), expect, epsilon = 1e-9);
    }

    #[test]
    fn bound_on_grid_matches_pointwise() {
        let inst = GronwallInstance::new(
            0.0,
            2.0,
            3.0,
            TimeFn::steps(vec![0.0, 1.0, 2.0], vec![0.5, 1.5, 0.25]).unwrap(),
            TimeFn::parse("t/(1+t)").unwrap(),
        )
        .unwrap();
        let grid = [0.5, 1.0, 2.5, 4.0];
        let on_grid = inst.bound_on_grid(&grid).unwrap();
        for (t, g) in grid.iter().zip(&on_grid) {
            assert_abs_diff_eq!(*g, inst.bound(*t).unwrap(), epsilon = 1e-9);
        }
    }

    #[test]
    fn oracle_closed_forms() {
        let cfg = IntegratorConfig::default();
        let u = consts(0.0, 3.0, 1.0, 0.0, 0.0).oracle(4.0, &cfg).unwrap();
        for s in &u.states {
            assert_abs_diff_eq!(s[0], 3.0, epsilon = 1e-12);
        }
        let u = consts(0.0, 2.0, 1.0, 1.0, 0.0).oracle(1.0, &cfg).unwrap();
        assert_abs_diff_eq!(u.states.last().unwrap()[0], 2.0 * std::f64::consts::E, epsilon = 1e-7);
    }

    #[test]
    fn negative_inputs_are_rejected() {
        let inst = GronwallInstance::new(0.0, 1.0, 1.0, TimeFn::parse("1-t").unwrap(), TimeFn::constant(0.0)).unwrap();
        match inst.bound(2.0) {
            Err(Error::NegativeSample { name, .. }) => assert_eq!(name, "v"),
            other => panic!("expected NegativeSample, got {other:?}"),
        }
        assert!(GronwallInstance::new(0.0, -1.0, 1.0, TimeFn::constant(0.0), TimeFn::constant(0.0)).is_err());
        assert!(GronwallInstance::new(0.0, 1.0, 0.0, TimeFn::constant(0.0), TimeFn::constant(0.0)).is_err());
    }

    #[test]
    fn optimize_r_hits_lower_edge_when_w_vanishes() {
        let v = TimeFn::constant(1.0);
        let w = TimeFn::constant(0.0);
        let opt = optimize_r(0.0, 2.0, &v, &w, 1.0).unwrap();
        assert_abs_diff_eq!(opt.r_opt, 1e-6, epsilon = 1e-9);
        // bound approaches the classical c e^(int v) from above
        assert_abs_diff_eq!(opt.bound, 2.0 * std::f64::consts::E, epsilon = 1e-4);
    }

    #[test]
    fn optimize_r_interior_minimum() {
        // minimize r e^(1/r): optimum r = 1, value e
        let v = TimeFn::constant(0.0);
        let w = TimeFn::constant(1.0);
        let opt = optimize_r(0.0, 0.0, &v, &w, 1.0).unwrap();
        assert_abs_diff_eq!(opt.r_opt, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(opt.bound, std::f64::consts::E, epsilon = 1e-10);
    }

    #[test]
    fn optimize_r_scales_linearly_in_w() {
        let v = TimeFn::constant(0.0);
        let opt1 = optimize_r(0.0, 0.0, &v, &TimeFn::constant(1.0), 1.0).unwrap();
        let opt2 = optimize_r(0.0, 0.0, &v, &TimeFn::constant(2.0), 1.0).unwrap();
        assert_abs_diff_eq!(opt2.r_opt, 2.0 * opt1.r_opt, epsilon = 1e-5);
    }

    #[test]
    fn lp_bound_paper_phi() {
        // phi = (1+t^2)^(-3/2): M_0 = ||phi||_1 = 1, N = 1, L = 0
        let phi = |t: f64| Ok((1.0 + t * t).powf(-1.5));
        let b = lp_linear_bound(phi, 1.0, 0.0, 0.0, 100.0, 1e-10).unwrap();
        assert_abs_diff_eq!(b.m_s, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.n, 1.0, epsilon = 1e-9);
        assert_eq!(b.l, 0.0);
        assert_abs_diff_eq!(b.bound, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn lp_bound_zero_phi() {
        let b = lp_linear_bound(|_t| Ok(0.0), 2.0, 1.0, 0.0, 10.0, 1e-10).unwrap();
        assert_eq!(b.n, 0.0);
        assert_eq!(b.l, 0.0);
    }

    #[test]
    fn lp_bound_exponential_p2() {
        // phi = e^-t, p = 2: M_0 = sqrt(1/2), N = L = M_0 / 2
        let b = lp_linear_bound(|t: f64| Ok((-t).exp()), 2.0, 0.0, 0.0, 5.0, 1e-10).unwrap();
        assert_abs_diff_eq!(b.m_s, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-9);
        assert_abs_diff_eq!(b.n, 0.35355339059327373, epsilon = 1e-9);
        assert_abs_diff_eq!(b.l, 0.35355339059327373, epsilon = 1e-9);
    }

    #[test]
    fn lp_bound_rejects_negative_phi() {
        let r = lp_linear_bound(|t: f64| Ok(1.0 - t), 1.0, 0.0, 0.0, 5.0, 1e-8);
        assert!(matches!(r, Err(Error::NegativeSample { .. })));
    }
}
