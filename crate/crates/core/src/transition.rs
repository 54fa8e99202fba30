//! Transition matrices of the perturbed linear system and the
//! perturbation series in eps.
//!
//! The perturbed transition matrix expands as
//! `R_eps(t,t0) = R_0(t,t0) + eps Y_1(t) + eps^2 Y_2(t) + ...` where the
//! terms solve `Y_i' = A0 Y_i + F Y_{i-1}` with `Y_0 = R_0` and
//! `Y_i(t0) = 0`. Each term obeys
//! `|Y_i(t)| <= (k c)^i e^(-gamma (t-t0)) (t-t0)^i / i!`, which yields the
//! perturbed envelope `|R_eps(t,t0)| <= (c+1) e^(-(gamma - k c eps)(t-t0))`
//! and the admissible range `eps < gamma / (k c)`.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::ode::{integrate, integrate_matrix, IntegratorConfig, MatrixTrajectory};
use crate::sysdef::SystemDef;

/// Default window for numerically approximating `sup_t |F(t)|`; the grid
/// maximum over a finite window is a lower bound on the true sup, so the
/// analytic metadata is the certified path when present.
pub const DEFAULT_T_SUP: f64 = 1e3;

/// Exponential envelope `|R_0(t,t0)| <= c e^(-gamma (t-t0))`.
#[derive(Debug, Clone)]
pub struct ExpEnvelope {
    pub c: f64,
    pub gamma: f64,
    pub provenance: EnvelopeProvenance,
}

#[derive(Debug, Clone)]
pub enum EnvelopeProvenance {
    /// Constants supplied by system metadata (certified).
    Analytic,
    /// Constants fitted to sampled transition-matrix norms; the envelope
    /// holds at every sample by construction.
    Fitted {
        t0_grid: Vec<f64>,
        horizon: f64,
        samples: usize,
        max_log_residual: f64,
    },
}

impl ExpEnvelope {
    pub fn analytic(c: f64, gamma: f64) -> ExpEnvelope {
        ExpEnvelope { c, gamma, provenance: EnvelopeProvenance::Analytic }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.provenance, EnvelopeProvenance::Analytic)
    }
}

/// How much perturbation the envelope survives.
#[derive(Debug, Clone)]
pub struct PerturbationBudget {
    /// `sup_t |F(t)|`.
    pub k: f64,
    /// Envelope constant of the perturbed system, `K = c + 1`.
    pub k_env: f64,
    pub c: f64,
    pub gamma: f64,
    /// `gamma / (k c)`; `None` means unbounded (`k == 0`).
    pub eps_star: Option<f64>,
}

impl PerturbationBudget {
    pub fn new(env: &ExpEnvelope, k: f64) -> PerturbationBudget {
        PerturbationBudget {
            k,
            k_env: env.c + 1.0,
            c: env.c,
            gamma: env.gamma,
            eps_star: epsilon_threshold(env, k),
        }
    }

    /// Decay rate of the perturbed envelope, `gamma - k c eps`.
    pub fn gamma_eps(&self, eps: f64) -> f64 {
        self.gamma - self.k * self.c * eps
    }

    /// True when the linear theorem applies at this eps.
    pub fn admits(&self, eps: f64) -> bool {
        match self.eps_star {
            None => true,
            Some(star) => eps < star,
        }
    }
}

/// `eps_star = gamma / (k c)`; `None` when `k == 0` (unbounded).
pub fn epsilon_threshold(env: &ExpEnvelope, k: f64) -> Option<f64> {
    if k == 0.0 {
        None
    } else {
        Some(env.gamma / (k * env.c))
    }
}

/// Transition matrix `R_{A_eps}(., t0)` of `x' = (A0 + eps F) x`.
pub fn transition_matrix(
    sys: &SystemDef,
    eps: f64,
    t0: f64,
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<MatrixTrajectory> {
    if !(eps >= 0.0) {
        return Err(Error::Validation(format!("eps = {eps} must be nonnegative")));
    }
    if tf == t0 {
        return Ok(MatrixTrajectory {
            t0,
            times: vec![t0],
            mats: vec![Mat::identity(sys.n)],
            steps_accepted: 0,
            steps_rejected: 0,
            escape: None,
        });
    }
    integrate_matrix(|t| sys.a_eps_at(t, eps), sys.n, t0, tf, cfg)
}

/// Envelope constants for the nominal system.
///
/// Analytic metadata is used verbatim when present. Otherwise `|R_0|` is
/// sampled over every `(t0, t)` pair from `t0_grid x [t0, t0 + horizon]`,
/// `gamma` is the least-squares slope of `-log |R_0|` against `t - t0`,
/// and `c` is inflated until the envelope holds at every sample.
pub fn fit_envelope(
    sys: &SystemDef,
    t0_grid: &[f64],
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<ExpEnvelope> {
    if let (Some(c), Some(gamma)) = (sys.meta.c, sys.meta.gamma) {
        return Ok(ExpEnvelope::analytic(c, gamma));
    }
    if t0_grid.is_empty() || !(horizon > 0.0) {
        return Err(Error::Validation("envelope fit needs a t0 grid and a positive horizon".into()));
    }

    let mut dts: Vec<f64> = Vec::new();
    let mut logs: Vec<f64> = Vec::new();
    for &t0 in t0_grid {
        let traj = transition_matrix(sys, 0.0, t0, t0 + horizon, cfg)?;
        if traj.escape.is_some() {
            return Err(Error::NotExponentiallyStable { gamma: f64::NEG_INFINITY });
        }
        for (t, m) in traj.times.iter().zip(&traj.mats) {
            let nrm = m.spectral_norm();
            if nrm > 1e-300 {
                dts.push(t - t0);
                logs.push(nrm.ln());
            }
        }
    }

    let n = dts.len() as f64;
    let mean_dt = dts.iter().sum::<f64>() / n;
    let mean_log = logs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (dt, lg) in dts.iter().zip(&logs) {
        sxx += (dt - mean_dt) * (dt - mean_dt);
        sxy += (dt - mean_dt) * (lg - mean_log);
    }
    let slope = sxy / sxx;
    let gamma = -slope;
    if !(gamma > 0.0) {
        return Err(Error::NotExponentiallyStable { gamma });
    }

    // smallest c making c e^(-gamma dt) >= |R| at every sample
    let mut log_c = f64::NEG_INFINITY;
    for (dt, lg) in dts.iter().zip(&logs) {
        log_c = log_c.max(lg + gamma * dt);
    }
    let c = log_c.exp();

    let intercept = mean_log - slope * mean_dt;
    let max_log_residual = dts
        .iter()
        .zip(&logs)
        .map(|(dt, lg)| (lg - (intercept + slope * dt)).abs())
        .fold(0.0_f64, f64::max);

    Ok(ExpEnvelope {
        c,
        gamma,
        provenance: EnvelopeProvenance::Fitted {
            t0_grid: t0_grid.to_vec(),
            horizon,
            samples: dts.len(),
            max_log_residual,
        },
    })
}

/// `sup_{t in [0, t_sup]} |F(t)|`: coarse grid maximum plus golden-section
/// refinement around the best cell. Analytic metadata overrides.
pub fn sup_f_norm(sys: &SystemDef, t_sup: f64) -> Result<f64> {
    if let Some(k) = sys.meta.k {
        return Ok(k);
    }
    if !(t_sup > 0.0) {
        return Err(Error::Validation(format!("t_sup = {t_sup} must be positive")));
    }
    const CELLS: usize = 2048;
    let norm_at = |t: f64| -> Result<f64> { Ok(sys.f_at(t)?.spectral_norm()) };

    let dt = t_sup / CELLS as f64;
    let mut best_t = 0.0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=CELLS {
        let t = i as f64 * dt;
        let v = norm_at(t)?;
        if v > best {
            best = v;
            best_t = t;
        }
    }

    // refine within the two cells around the best grid point
    let mut lo = (best_t - dt).max(0.0);
    let mut hi = (best_t + dt).min(t_sup);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = norm_at(x1)?;
    let mut f2 = norm_at(x2)?;
    for _ in 0..80 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = norm_at(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = norm_at(x2)?;
        }
    }
    Ok(best.max(f1).max(f2))
}

/// Truncated perturbation series of the transition matrix.
#[derive(Debug, Clone)]
pub struct SeriesApprox {
    pub t0: f64,
    pub order: usize,
    pub times: Vec<f64>,
    /// `R_0(times[j], t0)`.
    pub nominal: Vec<Mat>,
    /// `terms[i-1][j] = Y_i(times[j])`.
    pub terms: Vec<Vec<Mat>>,
}

impl SeriesApprox {
    /// `R_0 + sum_{i<=m} eps^i Y_i` at grid index `j`.
    pub fn partial_sum(&self, eps: f64, j: usize) -> Mat {
        let mut acc = self.nominal[j].clone();
        let mut scale = 1.0;
        for term in &self.terms {
            scale *= eps;
            acc = acc.add(&term[j].scale(scale));
        }
        acc
    }
}

/// Compute `Y_1 .. Y_m` by one stacked integration of the triangular
/// system `Y_0' = A0 Y_0`, `Y_i' = A0 Y_i + F Y_{i-1}`, avoiding nested
/// Duhamel quadrature.
pub fn series_terms(
    sys: &SystemDef,
    t0: f64,
    tf: f64,
    m: usize,
    cfg: &IntegratorConfig,
) -> Result<SeriesApprox> {
    if m == 0 {
        return Err(Error::Validation("series order m must be at least 1".into()));
    }
    let n = sys.n;
    let nn = n * n;
    let dim = (m + 1) * nn;

    let mut x0 = vec![0.0; dim];
    for i in 0..n {
        x0[i * n + i] = 1.0; // Y_0(t0) = I; all Y_i(t0) = 0
    }

    let rhs = |t: f64, y: &[f64], _eps: f64, out: &mut [f64]| -> Result<()> {
        let a0 = sys.a0_at(t)?;
        let f = sys.f_at(t)?;
        for blk in 0..=m {
            let yb = &y[blk * nn..(blk + 1) * nn];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += a0.get(i, l) * yb[l * n + j];
                    }
                    if blk > 0 {
                        let yprev = &y[(blk - 1) * nn..blk * nn];
                        for l in 0..n {
                            acc += f.get(i, l) * yprev[l * n + j];
                        }
                    }
                    out[blk * nn + i * n + j] = acc;
                }
            }
        }
        Ok(())
    };

    let traj = integrate(rhs, &x0, t0, tf, 0.0, cfg)?;
    if let Some(t) = traj.escape {
        return Err(Error::StepUnderflow { t });
    }

    let nominal = traj
        .states
        .iter()
        .map(|s| Mat::from_flat(n, s[..nn].to_vec()))
        .collect();
    let terms = (1..=m)
        .map(|i| {
            traj.states
                .iter()
                .map(|s| Mat::from_flat(n, s[i * nn..(i + 1) * nn].to_vec()))
                .collect()
        })
        .collect();

    Ok(SeriesApprox { t0, order: m, times: traj.times, nominal, terms })
}

/// Bound on the series tail past order `m`:
/// `e^(-gamma dt) * sum_{i > m} (k c eps dt)^i / i!`.
pub fn series_remainder_bound(
    env: &ExpEnvelope,
    k: f64,
    eps: f64,
    m: usize,
    t: f64,
    t0: f64,
) -> f64 {
    let dt = t - t0;
    if dt < 0.0 {
        return f64::NAN;
    }
    let x = k * env.c * eps * dt;
    if x == 0.0 {
        return 0.0;
    }
    // first tail term x^(m+1) / (m+1)!
    let mut term = 1.0;
    for i in 1..=(m + 1) {
        term *= x / i as f64;
    }
    let mut sum = term;
    let mut i = m + 2;
    while term > 1e-18 * sum {
        term *= x / i as f64;
        sum += term;
        i += 1;
    }
    (-env.gamma * dt).exp() * sum
}

/// Comparison of the series partial sum against direct integration.
#[derive(Debug, Clone)]
pub struct SeriesReport {
    pub times: Vec<f64>,
    /// `|R_direct - (R_0 + sum eps^i Y_i)|` per grid point.
    pub deviation: Vec<f64>,
    /// `series_remainder_bound` per grid point.
    pub remainder: Vec<f64>,
    pub max_deviation: f64,
    /// Largest violation `deviation - remainder` (negative when the bound
    /// holds everywhere).
    pub max_excess: f64,
}

/// Integrate `R_eps` directly and through the series and compare, checking
/// the truncation bound pointwise.
pub fn series_vs_direct(
    sys: &SystemDef,
    eps: f64,
    m: usize,
    t0: f64,
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<SeriesReport> {
    let env = fit_envelope(sys, &[t0], (tf - t0).max(1.0), cfg)?;
    let k = sup_f_norm(sys, DEFAULT_T_SUP)?;
    if let Some(star) = epsilon_threshold(&env, k) {
        if eps >= star {
            return Err(Error::EpsOverBudget { eps, eps_star: star });
        }
    }

    let direct = transition_matrix(sys, eps, t0, tf, cfg)?;
    let series = series_terms(sys, t0, tf, m, cfg)?;
    debug_assert_eq!(direct.times.len(), series.times.len());

    let mut deviation = Vec::with_capacity(direct.times.len());
    let mut remainder = Vec::with_capacity(direct.times.len());
    let mut max_deviation = 0.0_f64;
    let mut max_excess = f64::NEG_INFINITY;
    for j in 0..direct.times.len() {
        let t = direct.times[j];
        let dev = direct.mats[j].sub(&series.partial_sum(eps, j)).spectral_norm();
        let rem = series_remainder_bound(&env, k, eps, m, t, t0);
        max_deviation = max_deviation.max(dev);
        max_excess = max_excess.max(dev - rem);
        deviation.push(dev);
        remainder.push(rem);
    }

    Ok(SeriesReport { times: direct.times, deviation, remainder, max_deviation, max_excess })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysdef::{builtin, load_str};
    use approx::assert_abs_diff_eq;

    fn example1_closed_form(t: f64, t0: f64) -> Mat {
        let theta = 0.5 * (t * t - t0 * t0);
        let decay = (-(t - t0)).exp();
        Mat::from_rows(&[
            vec![decay * theta.cos(), -decay * theta.sin()],
            vec![decay * theta.sin(), decay * theta.cos()],
        ])
    }

    #[test]
    fn nominal_transition_matches_closed_form() {
        let sys = builtin("example1").unwrap();
        let cfg = IntegratorConfig::strict().with_grid_dt(0.05);
        let traj = transition_matrix(&sys, 0.0, 0.0, 5.0, &cfg).unwrap();
        let mut worst = 0.0_f64;
        for (t, m) in traj.times.iter().zip(&traj.mats) {
            let err = m.sub(&example1_closed_form(*t, 0.0)).max_abs_entry();
            worst = worst.max(err);
        }
        assert!(worst < 1e-8, "max entrywise error {worst}");
    }

    #[test]
    fn transition_at_t0_is_identity() {
        let sys = builtin("example2").unwrap();
        let traj = transition_matrix(&sys, 0.3, 2.0, 2.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(traj.mats.len(), 1);
        assert_eq!(traj.mats[0], Mat::identity(2));
    }

    #[test]
    fn example2_nominal_is_scalar_decay() {
        let sys = builtin("example2").unwrap();
        let traj = transition_matrix(&sys, 0.0, 0.0, 3.0, &IntegratorConfig::strict()).unwrap();
        for (t, m) in traj.times.iter().zip(&traj.mats) {
            assert_abs_diff_eq!(m.spectral_norm(), (-t).exp(), epsilon = 1e-9);
        }
    }

    #[test]
    fn envelope_prefers_analytic_metadata() {
        let sys = builtin("example1").unwrap();
        let env = fit_envelope(&sys, &[0.0], 5.0, &IntegratorConfig::default()).unwrap();
        assert!(env.is_analytic());
        assert_eq!((env.c, env.gamma), (1.0, 1.0));
    }

    #[test]
    fn envelope_fit_on_diagonal_decay() {
        let doc = r#"{
            "name": "decay", "dim": 2,
            "A0": [["-1", "0"], ["0", "-1"]],
            "F": [["0", "0"], ["0", "0"]],
            "h": ["0", "0"], "x0": [1, 1]
        }"#;
        let sys = load_str(doc).unwrap();
        let cfg = IntegratorConfig::default().with_grid_dt(0.1);
        let env = fit_envelope(&sys, &[0.0, 1.0], 5.0, &cfg).unwrap();
        assert_abs_diff_eq!(env.gamma, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(env.c, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn envelope_fit_rejects_unstable_nominal() {
        let doc = r#"{
            "name": "saddle", "dim": 2,
            "A0": [["1", "0"], ["0", "-1"]],
            "F": [["0", "0"], ["0", "0"]],
            "h": ["0", "0"], "x0": [1, 1]
        }"#;
        let sys = load_str(doc).unwrap();
        let cfg = IntegratorConfig::default().with_grid_dt(0.1);
        match fit_envelope(&sys, &[0.0], 5.0, &cfg) {
            Err(Error::NotExponentiallyStable { gamma }) => assert!(gamma <= 0.0),
            other => panic!("expected NotExponentiallyStable, got {other:?}"),
        }
    }

    #[test]
    fn sup_f_norm_examples() {
        let e1 = builtin("example1").unwrap();
        assert_eq!(sup_f_norm(&e1, DEFAULT_T_SUP).unwrap(), std::f64::consts::SQRT_2);

        // strip the metadata to exercise the numeric path
        let mut no_meta = builtin("example2").unwrap();
        no_meta.meta.k = None;
        let k = sup_f_norm(&no_meta, 100.0).unwrap();
        assert_abs_diff_eq!(k, 1.0, epsilon = 1e-9);

        let zero = load_str(r#"{
            "name": "z", "dim": 1,
            "A0": [["-1"]], "F": [["0"]], "h": ["0"], "x0": [1]
        }"#).unwrap();
        assert_eq!(sup_f_norm(&zero, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn threshold_values() {
        let env = ExpEnvelope::analytic(1.0, 1.0);
        assert_abs_diff_eq!(
            epsilon_threshold(&env, std::f64::consts::SQRT_2).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
        assert_eq!(epsilon_threshold(&env, 1.0), Some(1.0));
        assert_eq!(epsilon_threshold(&env, 0.0), None);
    }

    #[test]
    fn threshold_decreases_in_k() {
        let env = ExpEnvelope::analytic(2.0, 0.5);
        let t1 = epsilon_threshold(&env, 1.0).unwrap();
        let t2 = epsilon_threshold(&env, 2.0).unwrap();
        assert!(t2 < t1);
    }

    #[test]
    fn series_terms_start_at_zero_and_vanish_for_zero_f() {
        let doc = r#"{
            "name": "nof", "dim": 2,
            "A0": [["-1", "0"], ["0", "-2"]],
            "F": [["0", "0"], ["0", "0"]],
            "h": ["0", "0"], "x0": [1, 1]
        }"#;
        let sys = load_str(doc).unwrap();
        let s = series_terms(&sys, 0.0, 2.0, 3, &IntegratorConfig::default()).unwrap();
        for term in &s.terms {
            assert_eq!(term[0], Mat::zeros(2), "Y_i(t0) must vanish");
            for m in term {
                assert!(m.max_abs_entry() < 1e-12, "Y_i must vanish when F = 0");
            }
        }
    }

    #[test]
    fn first_term_matches_duhamel_quadrature() {
        use crate::ode::quad;
        let sys = builtin("example1").unwrap();
        let cfg = IntegratorConfig::strict().with_grid_dt(0.25);
        let s = series_terms(&sys, 0.0, 1.0, 1, &cfg).unwrap();
        let j = s.times.iter().position(|t| (t - 1.0).abs() < 1e-12).unwrap();
        let y1 = &s.terms[0][j];

        // independent oracle: quadrature of the Duhamel integrand built
        // from the closed-form nominal transition matrix
        let f = sys.f_at(0.0).unwrap();
        for i in 0..2 {
            for jj in 0..2 {
                let entry = quad(
                    |sv| {
                        let m = example1_closed_form(1.0, sv)
                            .matmul(&f)
                            .matmul(&example1_closed_form(sv, 0.0));
                        Ok(m.get(i, jj))
                    },
                    0.0,
                    1.0,
                    1e-12,
                )
                .unwrap();
                assert_abs_diff_eq!(y1.get(i, jj), entry, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn remainder_bound_limits() {
        let env = ExpEnvelope::analytic(1.0, 1.0);
        let k = std::f64::consts::SQRT_2;
        // m -> infinity limit is zero
        assert!(series_remainder_bound(&env, k, 0.1, 60, 2.0, 0.0) < 1e-30);
        // m = 0 gives e^(-gamma dt) (e^(k c eps dt) - 1)
        let dt: f64 = 2.0;
        let eps = 0.1;
        let expect = (-dt).exp() * ((k * eps * dt).exp() - 1.0);
        assert_abs_diff_eq!(series_remainder_bound(&env, k, eps, 0, dt, 0.0), expect, epsilon = 1e-15);
        // the paper's coarse estimate caps it
        assert!(series_remainder_bound(&env, k, eps, 0, dt, 0.0) <= ((-1.0 + k * eps) * dt).exp());
    }

    #[test]
    fn series_matches_direct_at_zero_eps() {
        let sys = builtin("example1").unwrap();
        let cfg = IntegratorConfig::strict().with_grid_dt(0.2);
        let rep = series_vs_direct(&sys, 0.0, 2, 0.0, 1.0, &cfg).unwrap();
        assert!(rep.max_deviation < 1e-10, "deviation {}", rep.max_deviation);
    }

    #[test]
    fn series_rejects_eps_over_budget() {
        let sys = builtin("example1").unwrap();
        let cfg = IntegratorConfig::default();
        match series_vs_direct(&sys, 0.8, 2, 0.0, 1.0, &cfg) {
            Err(Error::EpsOverBudget { .. }) => {}
            other => panic!("expected EpsOverBudget, got {other:?}"),
        }
    }
}
