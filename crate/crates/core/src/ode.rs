//! Numerical integration and quadrature.
//!
//! The integrator is a Dormand-Prince 5(4) embedded pair with PI step-size
//! control and FSAL; dense output onto a user grid uses 4th-order (cubic)
//! Hermite interpolation over each accepted step. Quadrature is adaptive
//! 15-point Gauss-Kronrod with QUADPACK-style error estimates; improper
//! integrals truncate on a doubling grid with a conservative fitted tail
//! bound.

use crate::error::{Error, Result};
use crate::linalg::{vec_norm, Mat};

/// Tolerances and output-grid settings shared by all integrations.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
    /// Spacing of the dense output grid.
    pub grid_dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_step: f64::INFINITY,
            grid_dt: 0.01,
        }
    }
}

impl IntegratorConfig {
    /// Tight tolerances for reference computations.
    pub fn strict() -> Self {
        IntegratorConfig {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            ..IntegratorConfig::default()
        }
    }

    pub fn with_grid_dt(mut self, dt: f64) -> Self {
        self.grid_dt = dt;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::Validation("integrator tolerances must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::Validation("max_step must be positive".into()));
        }
        if !(self.grid_dt > 0.0) {
            return Err(Error::Validation("grid_dt must be positive".into()));
        }
        Ok(())
    }
}

/// Sampled solution of a vector ODE.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t0: f64,
    pub eps: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// Set when the step size underflowed: the solution escapes in finite
    /// time near this instant. Samples stop just before it.
    pub escape: Option<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(|x| vec_norm(x)).collect()
    }

    pub fn final_norm(&self) -> f64 {
        self.states.last().map_or(0.0, |x| vec_norm(x))
    }
}

/// Sampled solution of a matrix ODE.
#[derive(Debug, Clone)]
pub struct MatrixTrajectory {
    pub t0: f64,
    pub times: Vec<f64>,
    pub mats: Vec<Mat>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub escape: Option<f64>,
}

impl MatrixTrajectory {
    pub fn dim(&self) -> usize {
        self.mats.first().map_or(0, Mat::dim)
    }

    pub fn norms(&self) -> Vec<f64> {
        self.mats.iter().map(Mat::spectral_norm).collect()
    }
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)
// ---------------------------------------------------------------------------

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Fifth-order weights (row 7 of A; FSAL).
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];

/// Error-estimate weights (5th minus embedded 4th order).
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate `x' = rhs(t, x, eps)` from `x0` over `[t0, tf]`, sampling the
/// solution on the dense grid of `cfg`.
pub fn integrate<F>(
    mut rhs: F,
    x0: &[f64],
    t0: f64,
    tf: f64,
    eps: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], f64, &mut [f64]) -> Result<()>,
{
    cfg.validate()?;
    if !(tf > t0) {
        return Err(Error::Validation(format!("tf = {tf} must exceed t0 = {t0}")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("initial state must be finite".into()));
    }

    let n = x0.len();
    let grid = dense_grid(t0, tf, cfg.grid_dt);

    let mut traj = Trajectory {
        t0,
        eps,
        times: Vec::with_capacity(grid.len() + 1),
        states: Vec::with_capacity(grid.len() + 1),
        steps_accepted: 0,
        steps_rejected: 0,
        escape: None,
    };
    traj.times.push(t0);
    traj.states.push(x0.to_vec());

    let mut t = t0;
    let mut y = x0.to_vec();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut ytmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    rhs(t, &y, eps, &mut k[0])?;

    let mut h = initial_step(&mut rhs, t0, tf, &y, &k[0], eps, cfg).unwrap_or((tf - t0) * 1e-6);
    h = h.min(cfg.max_step).min(tf - t0);

    const SAFE: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO1: f64 = 0.2 - BETA * 0.75;
    const FAC_SHRINK: f64 = 5.0; // at most h/5 per rejection
    const FAC_GROW: f64 = 0.1; // at most 10h per acceptance
    const MAX_STEPS: usize = 5_000_000;

    let mut facold = 1e-4_f64;
    let mut last_rejected = false;
    let mut grid_idx = 0usize;

    loop {
        if t >= tf {
            break;
        }
        if traj.steps_accepted + traj.steps_rejected >= MAX_STEPS {
            return Err(Error::TooManySteps { t, max_steps: MAX_STEPS });
        }
        let h_floor = 1e-14 * t.abs().max(1.0);
        if h < h_floor {
            traj.escape = Some(t);
            return Ok(traj);
        }
        let clamped = t + h >= tf;
        let h_step = if clamped { tf - t } else { h };
        let t_new = if clamped { tf } else { t + h_step };

        // Stages 2..7; stage 7 evaluates at (t + h, y_new) and doubles as
        // the first stage of the next step (FSAL).
        let mut stage_failed = false;
        let mut stage_error: Option<Error> = None;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                ytmp[i] = y[i] + h_step * acc;
            }
            if s == 6 {
                y_new.copy_from_slice(&ytmp);
            }
            if ytmp.iter().any(|v| !v.is_finite()) {
                stage_failed = true;
                break;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            match rhs(t + C[s] * h_step, &ytmp, eps, &mut tail[0]) {
                Ok(()) => {}
                Err(e) => {
                    stage_failed = true;
                    stage_error = Some(e);
                    break;
                }
            }
            if k[s].iter().any(|v| !v.is_finite()) {
                stage_failed = true;
                break;
            }
        }

        if stage_failed {
            // Either the step reached into a region the right-hand side
            // cannot be evaluated on, or the solution is blowing up. Try a
            // smaller step; at the floor the failure is genuine.
            traj.steps_rejected += 1;
            last_rejected = true;
            h = h_step * 0.25;
            if h < h_floor {
                if let Some(e) = stage_error {
                    return Err(e);
                }
                traj.escape = Some(t);
                return Ok(traj);
            }
            continue;
        }

        // y_new was filled by the stage-7 sum (the B row equals A[6]).
        debug_assert_eq!(B[..6], A[6][..6]);

        let mut err = 0.0;
        for i in 0..n {
            let mut e_acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    e_acc += E[j] * kj[i];
                }
            }
            let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
            let r = h_step * e_acc / sc;
            err += r * r;
        }
        err = (err / n as f64).sqrt();

        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            // accept
            facold = err.max(1e-4);
            traj.steps_accepted += 1;

            // dense output over (t, t_new]
            let step_tol = 1e-13 * t_new.abs().max(1.0);
            while grid_idx < grid.len() && grid[grid_idx] <= t_new + step_tol {
                let tau = grid[grid_idx];
                if tau >= t_new - step_tol {
                    traj.times.push(tau);
                    traj.states.push(y_new.clone());
                } else {
                    let theta = (tau - t) / h_step;
                    let mut yi = vec![0.0; n];
                    hermite(&y, &k[0], &y_new, &k[6], h_step, theta, &mut yi);
                    traj.times.push(tau);
                    traj.states.push(yi);
                }
                grid_idx += 1;
            }

            t = t_new;
            y.copy_from_slice(&y_new);
            k.swap(0, 6); // FSAL

            let mut fac = fac11 / facold.powf(BETA);
            fac = (fac / SAFE).clamp(FAC_GROW, FAC_SHRINK);
            let mut h_new = h_step / fac;
            if last_rejected {
                h_new = h_new.min(h_step);
                last_rejected = false;
            }
            h = h_new.min(cfg.max_step);
        } else {
            traj.steps_rejected += 1;
            last_rejected = true;
            h = h_step / (fac11 / SAFE).min(FAC_SHRINK);
        }
    }

    Ok(traj)
}

/// Dense-grid times strictly between t0 and tf, plus tf itself.
fn dense_grid(t0: f64, tf: f64, dt: f64) -> Vec<f64> {
    let span = tf - t0;
    let mut grid = Vec::new();
    let mut i = 1u64;
    loop {
        let ti = t0 + (i as f64) * dt;
        if ti >= tf - 1e-12 * span.max(1.0) {
            break;
        }
        grid.push(ti);
        i += 1;
    }
    grid.push(tf);
    grid
}

/// Cubic Hermite interpolation over one step (error O(h^4)), written in
/// difference form so constant solutions interpolate exactly.
fn hermite(y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], h: f64, theta: f64, out: &mut [f64]) {
    for i in 0..out.len() {
        let d = y1[i] - y0[i];
        let g0 = h * f0[i];
        let g1 = h * f1[i];
        out[i] = y0[i]
            + theta * d
            + theta * (theta - 1.0) * ((1.0 - 2.0 * theta) * d + (theta - 1.0) * g0 + theta * g1);
    }
}

/// Classic two-evaluation starting-step heuristic.
fn initial_step<F>(
    rhs: &mut F,
    t0: f64,
    tf: f64,
    y0: &[f64],
    f0: &[f64],
    eps: f64,
    cfg: &IntegratorConfig,
) -> Option<f64>
where
    F: FnMut(f64, &[f64], f64, &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|v| cfg.abs_tol + cfg.rel_tol * v.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter().zip(&sc).map(|(x, s)| (x / s) * (x / s)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(tf - t0);

    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    rhs(t0 + h0, &y1, eps, &mut f1).ok()?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;

    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Some((100.0 * h0).min(h1).min(tf - t0))
}

/// Integrate the matrix ODE `R' = A(t) R`, `R(t0) = I`, columnwise as a
/// flattened system.
pub fn integrate_matrix<F>(
    mut a_fn: F,
    n: usize,
    t0: f64,
    tf: f64,
    cfg: &IntegratorConfig,
) -> Result<MatrixTrajectory>
where
    F: FnMut(f64) -> Result<Mat>,
{
    let x0: Vec<f64> = Mat::identity(n).as_slice().to_vec();
    let rhs = |t: f64, y: &[f64], _eps: f64, out: &mut [f64]| -> Result<()> {
        let a = a_fn(t)?;
        // out = A * Y with Y row-major
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += a.get(i, l) * y[l * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        Ok(())
    };
    let traj = integrate(rhs, &x0, t0, tf, 0.0, cfg)?;
    Ok(MatrixTrajectory {
        t0: traj.t0,
        times: traj.times,
        mats: traj.states.into_iter().map(|s| Mat::from_flat(n, s)).collect(),
        steps_accepted: traj.steps_accepted,
        steps_rejected: traj.steps_rejected,
        escape: traj.escape,
    })
}

/// Spectral (Euclidean operator) norm of a matrix.
pub fn matrix_norm(m: &Mat) -> f64 {
    m.spectral_norm()
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod quadrature
// ---------------------------------------------------------------------------

// 15-point Kronrod rule with embedded 7-point Gauss rule (QUADPACK dqk15).
const XGK: [f64; 8] = [
    0.99145537112081264,
    0.94910791234275852,
    0.86486442335976907,
    0.74153118559939444,
    0.58608723546769113,
    0.40584515137739717,
    0.20778495500789847,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529225,
    0.063092092629978553,
    0.10479001032225018,
    0.14065325971552592,
    0.16900472663926790,
    0.19035057806478542,
    0.20443294007529889,
    0.20948214108472783,
];
const WG: [f64; 4] = [
    0.12948496616886969,
    0.27970539148927664,
    0.38183005050511894,
    0.41795918367346939,
];

struct PanelResult {
    value: f64,
    err: f64,
}

fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<PanelResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let centr = 0.5 * (a + b);
    let hlgth = 0.5 * (b - a);

    let fc = f(centr)?;
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    let mut resg = WG[3] * fc;
    let mut resk = WGK[7] * fc;
    let mut resabs = resk.abs();

    for j in 0..3 {
        let jtw = 2 * j + 1;
        let absc = hlgth * XGK[jtw];
        let f1 = f(centr - absc)?;
        let f2 = f(centr + absc)?;
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        let fsum = f1 + f2;
        resg += WG[j] * fsum;
        resk += WGK[jtw] * fsum;
        resabs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..4 {
        let jtwm1 = 2 * j;
        let absc = hlgth * XGK[jtwm1];
        let f1 = f(centr - absc)?;
        let f2 = f(centr + absc)?;
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        let fsum = f1 + f2;
        resk += WGK[jtwm1] * fsum;
        resabs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }

    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }

    let value = resk * hlgth;
    let resabs = resabs * hlgth.abs();
    let resasc = resasc * hlgth.abs();
    let mut err = ((resk - resg) * hlgth).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    err = err.max(f64::EPSILON * 50.0 * resabs);
    Ok(PanelResult { value, err })
}

/// Adaptive quadrature of `f` over the finite interval `[a, b]` with
/// estimated absolute error at most `tol`.
pub fn quad<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    // (err, a, b, value); worst panel first.
    #[derive(PartialEq)]
    struct Panel {
        err: f64,
        a: f64,
        b: f64,
        value: f64,
    }
    impl Eq for Panel {}
    impl PartialOrd for Panel {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Panel {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.err.partial_cmp(&other.err).unwrap_or(std::cmp::Ordering::Equal)
        }
    }

    const MAX_PANELS: usize = 20_000;
    let first = gk15(&mut f, lo, hi)?;
    let mut total_err = first.err;
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(Panel { err: first.err, a: lo, b: hi, value: first.value });

    while total_err > tol && heap.len() < MAX_PANELS {
        let worst = heap.pop().expect("heap cannot be empty while err > 0");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval can no longer be split in f64
            heap.push(worst);
            break;
        }
        let left = gk15(&mut f, worst.a, mid)?;
        let right = gk15(&mut f, mid, worst.b)?;
        total_err += left.err + right.err - worst.err;
        heap.push(Panel { err: left.err, a: worst.a, b: mid, value: left.value });
        heap.push(Panel { err: right.err, a: mid, b: worst.b, value: right.value });
    }

    if total_err > tol {
        return Err(Error::QuadNonConvergence { a, b, err: total_err, tol });
    }
    // Re-sum panels left-to-right so the result does not depend on the
    // subdivision history.
    let mut panels: Vec<Panel> = heap.into_vec();
    panels.sort_by(|p, q| p.a.partial_cmp(&q.a).unwrap());
    Ok(sign * panels.iter().map(|p| p.value).sum::<f64>())
}

/// Result of an improper integral over `[a, +inf)`.
#[derive(Debug, Clone, Copy)]
pub struct ImproperQuad {
    /// Truncated integral plus the tail bound: a conservative estimate of
    /// the improper integral, accurate to about `tail_tol`.
    pub value: f64,
    /// Upper bound on the neglected tail mass.
    pub tail_bound: f64,
    /// Truncation point.
    pub t_tail: f64,
}

const IMPROPER_T0: f64 = 64.0;
const IMPROPER_DOUBLINGS: i32 = 20;

/// Integrate a nonnegative, eventually decreasing `f` over `[a, +inf)`.
///
/// The truncation point doubles from 64 until a fitted local decay model
/// (the larger of an exponential and a power-law tail, times a safety
/// factor of two) bounds the tail below `tail_tol / 2`; the truncated part
/// is then integrated to `tail_tol / 2`, so `value` carries total error at
/// most `tail_tol`.
pub fn quad_improper<F>(mut f: F, a: f64, tail_tol: f64) -> Result<ImproperQuad>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a < 0.0 {
        return Err(Error::Validation(format!("lower limit {a} must be nonnegative")));
    }
    if !(tail_tol > 0.0) {
        return Err(Error::Validation("tail tolerance must be positive".into()));
    }

    let check = |t: f64, f: &mut F| -> Result<f64> {
        let v = f(t)?;
        if v < 0.0 {
            return Err(Error::NegativeSample { name: "integrand".into(), t, value: v });
        }
        Ok(v)
    };

    let mut seg_start = a;
    for j in 0..=IMPROPER_DOUBLINGS {
        let t_end = a + IMPROPER_T0 * f64::powi(2.0, j);
        // nonnegativity scan of the new segment
        for i in 0..=32 {
            let t = seg_start + (t_end - seg_start) * (i as f64) / 32.0;
            check(t, &mut f)?;
        }
        seg_start = t_end;

        let t1 = 0.5 * (a + t_end);
        let t2 = t_end;
        let f1 = check(t1, &mut f)?;
        let f2 = check(t2, &mut f)?;

        let tail = if f1 == 0.0 && f2 == 0.0 {
            Some(0.0)
        } else if f2 > 0.0 && f1 > f2 {
            let ratio = (f1 / f2).ln();
            let beta = ratio / (t2 - t1);
            let tail_exp = f2 / beta;
            let q = ratio / (t2 / t1).ln();
            let tail_pow = if q > 1.0 { f2 * t2 / (q - 1.0) } else { f64::INFINITY };
            let bound = 2.0 * tail_exp.max(tail_pow);
            bound.is_finite().then_some(bound)
        } else {
            None
        };

        if let Some(tail_bound) = tail {
            if tail_bound <= 0.5 * tail_tol {
                let quad_tol = (0.5 * tail_tol).max(5e-15);
                let truncated = quad(&mut f, a, t_end, quad_tol)?;
                return Ok(ImproperQuad {
                    value: truncated + tail_bound,
                    tail_bound,
                    t_tail: t_end,
                });
            }
        }
    }

    Err(Error::NoDecay { t_cap: a + IMPROPER_T0 * f64::powi(2.0, IMPROPER_DOUBLINGS) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ok(f: impl Fn(f64) -> f64) -> impl FnMut(f64) -> Result<f64> {
        move |t| Ok(f(t))
    }

    #[test]
    fn scalar_exponential_decay() {
        let traj = integrate(
            |_t, x, _e, out| {
                out[0] = -x[0];
                Ok(())
            },
            &[1.0],
            0.0,
            1.0,
            0.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let last = traj.states.last().unwrap()[0];
        assert_abs_diff_eq!(last, (-1.0f64).exp(), epsilon = 1e-8);
        assert_eq!(traj.states[0][0], 1.0);
        assert!(traj.escape.is_none());
    }

    #[test]
    fn constant_field_is_exact() {
        let traj = integrate(
            |_t, _x, _e, out| {
                out[0] = 0.0;
                out[1] = 0.0;
                Ok(())
            },
            &[3.0, -2.0],
            0.0,
            5.0,
            0.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        for s in &traj.states {
            assert_eq!(s, &vec![3.0, -2.0]);
        }
        // strictly increasing sample times starting at t0
        assert_eq!(traj.times[0], 0.0);
        assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dense_grid_spacing() {
        let g = dense_grid(0.0, 1.0, 0.25);
        assert_eq!(g.len(), 4);
        assert_abs_diff_eq!(g[0], 0.25);
        assert_eq!(*g.last().unwrap(), 1.0);
    }

    #[test]
    fn finite_time_escape_is_data() {
        // x' = x^2 from x(0)=1 blows up at t = 1.
        let traj = integrate(
            |_t, x, _e, out| {
                out[0] = x[0] * x[0];
                Ok(())
            },
            &[1.0],
            0.0,
            2.0,
            0.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let esc = traj.escape.expect("must escape");
        assert_abs_diff_eq!(esc, 1.0, epsilon = 1e-3);
        assert!(traj.states.iter().all(|s| s[0].is_finite()));
    }

    #[test]
    fn zero_matrix_gives_identity() {
        let traj = integrate_matrix(|_t| Ok(Mat::zeros(2)), 2, 0.0, 3.0, &IntegratorConfig::default()).unwrap();
        for m in &traj.mats {
            assert_eq!(m, &Mat::identity(2));
        }
    }

    #[test]
    fn diagonal_decay_matrix() {
        let a = Mat::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]);
        let traj = integrate_matrix(move |_t| Ok(a.clone()), 2, 0.0, 2.0, &IntegratorConfig::strict()).unwrap();
        for (t, m) in traj.times.iter().zip(&traj.mats) {
            let expect = (-t).exp();
            assert_abs_diff_eq!(m.get(0, 0), expect, epsilon = 1e-9);
            assert_abs_diff_eq!(m.get(1, 1), expect, epsilon = 1e-9);
            assert_abs_diff_eq!(m.get(0, 1), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn quad_golden_values() {
        assert_abs_diff_eq!(quad(ok(|t| t), 0.0, 1.0, 1e-12).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            quad(ok(|t| (1.0 + t * t).powf(-1.5)), 0.0, 1.0, 1e-10).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            quad(ok(|t| t.sin()), 0.0, 2.0 * std::f64::consts::PI, 1e-12).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn quad_is_oriented_and_additive() {
        let v = quad(ok(|t| t * t), 1.0, 0.0, 1e-12).unwrap();
        assert_abs_diff_eq!(v, -1.0 / 3.0, epsilon = 1e-12);
        let left = quad(ok(|t| t.exp()), 0.0, 0.4, 1e-13).unwrap();
        let right = quad(ok(|t| t.exp()), 0.4, 1.0, 1e-13).unwrap();
        assert_abs_diff_eq!(left + right, std::f64::consts::E - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quad_propagates_errors() {
        let r = quad(|_t: f64| Err(Error::Domain("boom".into())), 0.5, 2.0, 1e-10);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn improper_rational_decay() {
        let r = quad_improper(ok(|t| (1.0 + t * t).powf(-1.5)), 0.0, 1e-6).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-6);
        assert!(r.tail_bound <= 5e-7);
        assert!(r.t_tail >= 64.0);
    }

    #[test]
    fn improper_exponential_decay() {
        let r = quad_improper(ok(|t| (-t).exp()), 0.0, 1e-6).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-6);
        assert_eq!(r.t_tail, 64.0);
    }

    #[test]
    fn improper_constant_has_no_decay() {
        match quad_improper(ok(|_t| 1.0), 0.0, 1e-6) {
            Err(Error::NoDecay { .. }) => {}
            other => panic!("expected NoDecay, got {other:?}"),
        }
    }

    #[test]
    fn improper_zero_function() {
        let r = quad_improper(ok(|_t| 0.0), 0.0, 1e-9).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.tail_bound, 0.0);
    }

    #[test]
    fn improper_rejects_negative_samples() {
        match quad_improper(ok(|t| 1.0 - t), 0.0, 1e-6) {
            Err(Error::NegativeSample { .. }) => {}
            other => panic!("expected NegativeSample, got {other:?}"),
        }
    }

    #[test]
    fn improper_tight_tolerance() {
        let r = quad_improper(ok(|t| (1.0 + t * t).powf(-1.5)), 0.0, 1e-13).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 2e-13);
    }

    #[test]
    fn matrix_norm_examples() {
        assert_eq!(matrix_norm(&Mat::identity(2)), 1.0);
        assert_abs_diff_eq!(
            matrix_norm(&Mat::from_rows(&[vec![1.0, -1.0], vec![1.0, 1.0]])),
            1.4142135623730951,
            epsilon = 1e-12
        );
        assert_eq!(matrix_norm(&Mat::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]])), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let r = integrate(|_t, _x, _e, out: &mut [f64]| { out[0] = 0.0; Ok(()) }, &[1.0], 1.0, 1.0, 0.0, &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::Validation(_))));
        let r = integrate(|_t, _x, _e, out: &mut [f64]| { out[0] = 0.0; Ok(()) }, &[f64::NAN], 0.0, 1.0, 0.0, &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::Validation(_))));
    }
}
