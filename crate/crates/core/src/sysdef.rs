//! System definitions: the data model for `x' = A0(t) x + eps F(t) x + h(t, x, eps)`.
//!
//! Systems are loaded from JSON documents whose matrix and vector entries
//! are expression strings in the DSL of [`crate::expr`]. The two systems
//! from the worked examples ship as built-ins (`example1`, `example2`)
//! together with their analytic metadata, which downstream certification
//! uses verbatim as the certified path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{EvalContext, ScalarExpr};
use crate::linalg::Mat;

/// Optional analytic facts about a system, used verbatim when present.
#[derive(Debug, Clone, Default)]
pub struct AnalyticMeta {
    /// Envelope constants of the nominal transition matrix:
    /// `|R_A0(t,t0)| <= c e^(-gamma (t-t0))`.
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    /// `sup_t |F(t)|`.
    pub k: Option<f64>,
    /// A certified direct bound for the perturbed envelope constant,
    /// replacing the generic `K = c + 1`.
    pub k_envelope_override: Option<f64>,
    /// The state-proportional disturbance gain of `|h| <= phi |x| + lambda`.
    pub phi: Option<ScalarExpr>,
    /// The state-free disturbance level (a function of `t` and `eps`).
    pub lambda: Option<ScalarExpr>,
    /// `sup_t e^(gamma_eps t) lambda(t)`.
    pub m_prime: Option<f64>,
}

/// Parsed, validated, immutable system description.
#[derive(Debug, Clone)]
pub struct SystemDef {
    pub name: String,
    pub n: usize,
    pub a0: Vec<Vec<ScalarExpr>>,
    pub f: Vec<Vec<ScalarExpr>>,
    pub h: Vec<ScalarExpr>,
    pub x0: Vec<f64>,
    pub meta: AnalyticMeta,
}

// JSON document schema. Unknown keys are rejected.
#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    name: String,
    dim: usize,
    #[serde(rename = "A0")]
    a0: Vec<Vec<String>>,
    #[serde(rename = "F")]
    f: Vec<Vec<String>>,
    h: Vec<String>,
    x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<RawMeta>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<f64>,
    #[serde(rename = "K_override", default, skip_serializing_if = "Option::is_none")]
    k_override: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<String>,
    #[serde(rename = "M_prime", default, skip_serializing_if = "Option::is_none")]
    m_prime: Option<f64>,
}

const EXAMPLE1_JSON: &str = include_str!("../systems/example1.json");
const EXAMPLE2_JSON: &str = include_str!("../systems/example2.json");

/// Look up a built-in system by name.
pub fn builtin(name: &str) -> Option<SystemDef> {
    let json = match name {
        "example1" => EXAMPLE1_JSON,
        "example2" => EXAMPLE2_JSON,
        _ => return None,
    };
    Some(load_str(json).expect("built-in systems are valid"))
}

pub fn builtin_names() -> &'static [&'static str] {
    &["example1", "example2"]
}

/// Parse and validate a system definition from JSON text.
pub fn load_str(text: &str) -> Result<SystemDef> {
    let raw: RawSystem =
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("system document: {e}")))?;
    validate(raw)
}

fn parse_entry(src: &str, what: &str) -> Result<ScalarExpr> {
    ScalarExpr::parse(src).map_err(|e| Error::Validation(format!("{what}: `{src}`: {e}")))
}

fn validate(raw: RawSystem) -> Result<SystemDef> {
    let n = raw.dim;
    if n == 0 {
        return Err(Error::Validation("dim must be at least 1".into()));
    }
    let shape_err = |what: &str| Error::Validation(format!("{what} must be {n}x{n} for dim = {n}"));

    if raw.a0.len() != n || raw.a0.iter().any(|r| r.len() != n) {
        return Err(shape_err("A0"));
    }
    if raw.f.len() != n || raw.f.iter().any(|r| r.len() != n) {
        return Err(shape_err("F"));
    }
    if raw.h.len() != n {
        return Err(Error::Validation(format!("h must have {n} components")));
    }
    if raw.x0.len() != n {
        return Err(Error::Validation(format!("x0 must have {n} components")));
    }
    if raw.x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("x0 must be finite".into()));
    }

    let parse_matrix = |rows: &[Vec<String>], what: &str| -> Result<Vec<Vec<ScalarExpr>>> {
        rows.iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, src)| {
                        let e = parse_entry(src, &format!("{what}[{i}][{j}]"))?;
                        if e.uses_state() {
                            return Err(Error::Validation(format!(
                                "state variable in {what}[{i}][{j}]: `{src}`"
                            )));
                        }
                        if e.uses_eps() {
                            return Err(Error::Validation(format!(
                                "eps in {what}[{i}][{j}]: `{src}` (the perturbation enters only through eps*F)"
                            )));
                        }
                        Ok(e)
                    })
                    .collect()
            })
            .collect()
    };

    let a0 = parse_matrix(&raw.a0, "A0")?;
    let f = parse_matrix(&raw.f, "F")?;

    let h = raw
        .h
        .iter()
        .enumerate()
        .map(|(i, src)| {
            let e = parse_entry(src, &format!("h[{i}]"))?;
            let k = e.max_state_index();
            if k > n {
                return Err(Error::Validation(format!(
                    "h[{i}] references x{k} but dim = {n}"
                )));
            }
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;

    let meta = match raw.meta {
        None => AnalyticMeta::default(),
        Some(m) => {
            let check_pos = |v: Option<f64>, name: &str| -> Result<Option<f64>> {
                if let Some(v) = v {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::Validation(format!("meta.{name} must be positive")));
                    }
                }
                Ok(v)
            };
            let check_nonneg = |v: Option<f64>, name: &str| -> Result<Option<f64>> {
                if let Some(v) = v {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(Error::Validation(format!("meta.{name} must be nonnegative")));
                    }
                }
                Ok(v)
            };
            let phi = m.phi.as_deref().map(|s| parse_entry(s, "meta.phi")).transpose()?;
            if let Some(p) = &phi {
                if p.uses_state() || p.uses_eps() {
                    return Err(Error::Validation("meta.phi may reference t only".into()));
                }
            }
            let lambda = m.lambda.as_deref().map(|s| parse_entry(s, "meta.lambda")).transpose()?;
            if let Some(l) = &lambda {
                if l.uses_state() {
                    return Err(Error::Validation("meta.lambda may reference t and eps only".into()));
                }
            }
            AnalyticMeta {
                c: check_pos(m.c, "c")?,
                gamma: check_pos(m.gamma, "gamma")?,
                k: check_nonneg(m.k, "k")?,
                k_envelope_override: check_pos(m.k_override, "K_override")?,
                phi,
                lambda,
                m_prime: check_nonneg(m.m_prime, "M_prime")?,
            }
        }
    };

    Ok(SystemDef {
        name: raw.name,
        n,
        a0,
        f,
        h,
        x0: raw.x0,
        meta,
    })
}

impl SystemDef {
    /// Serialize back to the JSON document form (expressions printed).
    pub fn to_json_string(&self) -> String {
        let raw = RawSystem {
            name: self.name.clone(),
            dim: self.n,
            a0: self.a0.iter().map(|r| r.iter().map(|e| e.to_string()).collect()).collect(),
            f: self.f.iter().map(|r| r.iter().map(|e| e.to_string()).collect()).collect(),
            h: self.h.iter().map(|e| e.to_string()).collect(),
            x0: self.x0.clone(),
            meta: {
                let m = &self.meta;
                if m.c.is_none()
                    && m.gamma.is_none()
                    && m.k.is_none()
                    && m.k_envelope_override.is_none()
                    && m.phi.is_none()
                    && m.lambda.is_none()
                    && m.m_prime.is_none()
                {
                    None
                } else {
                    Some(RawMeta {
                        c: m.c,
                        gamma: m.gamma,
                        k: m.k,
                        k_override: m.k_envelope_override,
                        phi: m.phi.as_ref().map(|e| e.to_string()),
                        lambda: m.lambda.as_ref().map(|e| e.to_string()),
                        m_prime: m.m_prime,
                    })
                }
            },
        };
        serde_json::to_string_pretty(&raw).expect("document serialization cannot fail")
    }

    /// Evaluate the nominal matrix `A0(t)`.
    pub fn a0_at(&self, t: f64) -> Result<Mat> {
        self.eval_matrix(&self.a0, t)
    }

    /// Evaluate the perturbation direction `F(t)`.
    pub fn f_at(&self, t: f64) -> Result<Mat> {
        self.eval_matrix(&self.f, t)
    }

    /// Evaluate `A_eps(t) = A0(t) + eps F(t)`.
    pub fn a_eps_at(&self, t: f64, eps: f64) -> Result<Mat> {
        Ok(self.a0_at(t)?.add(&self.f_at(t)?.scale(eps)))
    }

    /// Evaluate the disturbance `h(t, x, eps)`.
    pub fn h_at(&self, t: f64, x: &[f64], eps: f64) -> Result<Vec<f64>> {
        let ctx = EvalContext::new(t, eps, x);
        self.h.iter().map(|e| e.eval(&ctx)).collect()
    }

    fn eval_matrix(&self, entries: &[Vec<ScalarExpr>], t: f64) -> Result<Mat> {
        let ctx = EvalContext::time(t);
        let mut m = Mat::zeros(self.n);
        for (i, row) in entries.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                m.set(i, j, e.eval(&ctx)?);
            }
        }
        Ok(m)
    }

    /// The full right-hand side `A0(t) x + eps F(t) x + h(t, x, eps)` as a
    /// field for the integrator.
    pub fn rhs(&self) -> impl Fn(f64, &[f64], f64, &mut [f64]) -> Result<()> + '_ {
        move |t, x, eps, out| {
            let ctx = EvalContext::new(t, eps, x);
            for i in 0..self.n {
                let mut acc = 0.0;
                for j in 0..self.n {
                    let tctx = EvalContext::time(t);
                    let a = self.a0[i][j].eval(&tctx)?;
                    let f = self.f[i][j].eval(&tctx)?;
                    acc += (a + eps * f) * x[j];
                }
                acc += self.h[i].eval(&ctx)?;
                out[i] = acc;
            }
            Ok(())
        }
    }

    /// True when `h` is identically the zero expression.
    pub fn h_is_zero(&self) -> bool {
        self.h.iter().all(|e| matches!(e, ScalarExpr::Num(v) if *v == 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn builtin_example1_matches_paper_system() {
        let sys = builtin("example1").unwrap();
        assert_eq!(sys.n, 2);
        assert_eq!(sys.x0, vec![1.0, 2.0]);
        assert_eq!(sys.meta.c, Some(1.0));
        assert_eq!(sys.meta.gamma, Some(1.0));
        assert_eq!(sys.meta.k, Some(std::f64::consts::SQRT_2));
        let a0 = sys.a0_at(3.0).unwrap();
        assert_eq!(a0, Mat::from_rows(&[vec![-1.0, -3.0], vec![3.0, -1.0]]));
        let f = sys.f_at(7.0).unwrap();
        assert_eq!(f, Mat::from_rows(&[vec![1.0, -1.0], vec![1.0, 1.0]]));
        assert!(sys.h_is_zero());
    }

    #[test]
    fn builtin_example2_matches_paper_system() {
        let sys = builtin("example2").unwrap();
        assert_eq!(sys.n, 2);
        let f = sys.f_at(1.0).unwrap();
        assert_eq!(f, Mat::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]]));
        assert!(sys.meta.phi.is_some() && sys.meta.lambda.is_some());
        assert!(!sys.h_is_zero());
    }

    #[test]
    fn rhs_example1_hand_value() {
        let sys = builtin("example1").unwrap();
        let rhs = sys.rhs();
        let mut out = vec![0.0; 2];
        rhs(0.0, &[1.0, 2.0], 0.0, &mut out).unwrap();
        assert_eq!(out, vec![-1.0, -2.0]);
    }

    #[test]
    fn rhs_example2_hand_value() {
        let sys = builtin("example2").unwrap();
        let mut out = vec![0.0; 2];
        sys.rhs()(0.0, &[1.0, 2.0], 0.1, &mut out).unwrap();
        // h1(0, (1,2), 0.1) = 1/(1+sqrt(5)) + 0.05, h2 = 0
        let h1 = 1.0 / (1.0 + 5.0_f64.sqrt()) + 0.05;
        assert_abs_diff_eq!(h1, 0.3590169943749474, epsilon = 1e-15);
        // full field: A0 x + eps F x + h
        assert_abs_diff_eq!(out[0], -1.0 + 0.1 * 2.0 + h1, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], -2.0 + 0.1 * 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_field_iff_origin_equilibrium() {
        let sys = builtin("example2").unwrap();
        // with eps = 0 the disturbance vanishes at x = 0
        let mut out = vec![0.0; 2];
        sys.rhs()(2.0, &[0.0, 0.0], 0.0, &mut out).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn state_variable_in_a0_is_rejected() {
        let doc = r#"{
            "name": "bad", "dim": 1,
            "A0": [["x1+t"]], "F": [["0"]], "h": ["0"], "x0": [1]
        }"#;
        match load_str(doc) {
            Err(Error::Validation(msg)) => assert!(msg.contains("state variable"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn schema_violations_are_rejected() {
        // unknown key
        assert!(load_str(r#"{"name":"s","dim":1,"A0":[["0"]],"F":[["0"]],"h":["0"],"x0":[1],"extra":0}"#).is_err());
        // dimension mismatch
        assert!(load_str(r#"{"name":"s","dim":2,"A0":[["0"]],"F":[["0"]],"h":["0"],"x0":[1]}"#).is_err());
        // h referencing out-of-range state
        assert!(load_str(r#"{"name":"s","dim":1,"A0":[["0"]],"F":[["0"]],"h":["x2"],"x0":[1]}"#).is_err());
        // malformed expression
        assert!(load_str(r#"{"name":"s","dim":1,"A0":[["1+"]],"F":[["0"]],"h":["0"],"x0":[1]}"#).is_err());
        // eps in F
        assert!(load_str(r#"{"name":"s","dim":1,"A0":[["0"]],"F":[["eps"]],"h":["0"],"x0":[1]}"#).is_err());
    }

    #[test]
    fn document_round_trip_preserves_rhs() {
        let sys = builtin("example2").unwrap();
        let reloaded = load_str(&sys.to_json_string()).unwrap();
        let mut a = vec![0.0; 2];
        let mut b = vec![0.0; 2];
        for i in 0..100 {
            let t = 0.13 * i as f64;
            let x = [(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos() * 2.0];
            let eps = 0.01 * i as f64 % 0.9;
            sys.rhs()(t, &x, eps, &mut a).unwrap();
            reloaded.rhs()(t, &x, eps, &mut b).unwrap();
            assert_eq!(a, b, "rhs mismatch at sample {i}");
        }
    }
}
