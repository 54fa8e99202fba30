//! Scalar expression DSL for time-varying matrices and perturbation terms.
//!
//! Expressions are written over the variables `t`, `eps`, `x1`..`xn`, the
//! constants `pi` and `e`, the operators `+ - * / ^` (with `^`
//! right-associative and unary minus binding tighter than `*` but looser
//! than `^`), and the functions `sin cos tan exp log sqrt abs min max`.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := ('-')* power
//! power  := atom ('^' factor)?
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Trees are immutable after parsing and safe to share across threads.
//! Evaluation is pure: the same context always yields bit-identical output.

use std::fmt;

use crate::error::{Error, Result};

/// Named constants the lexer resolves directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Constant::Pi => "pi",
            Constant::E => "e",
        }
    }
}

/// Variables an expression may reference. State variables are 1-based, so
/// `Var::State(1)` is `x1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    Eps,
    State(usize),
}

impl Var {
    fn name(self) -> String {
        match self {
            Var::T => "t".to_string(),
            Var::Eps => "eps".to_string(),
            Var::State(k) => format!("x{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }
}

/// Abstract syntax tree of a scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarExpr {
    Num(f64),
    Const(Constant),
    Var(Var),
    Neg(Box<ScalarExpr>),
    Bin(BinOp, Box<ScalarExpr>, Box<ScalarExpr>),
    Call(Func, Vec<ScalarExpr>),
}

/// Values bound to the variables during evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub t: f64,
    pub eps: f64,
    pub x: &'a [f64],
}

impl<'a> EvalContext<'a> {
    pub fn new(t: f64, eps: f64, x: &'a [f64]) -> Self {
        EvalContext { t, eps, x }
    }

    /// Context for time-only expressions (matrix entries, phi).
    pub fn time(t: f64) -> EvalContext<'static> {
        EvalContext { t, eps: 0.0, x: &[] }
    }

    /// Context for (t, eps) expressions (lambda).
    pub fn time_eps(t: f64, eps: f64) -> EvalContext<'static> {
        EvalContext { t, eps, x: &[] }
    }
}

impl ScalarExpr {
    /// Parse `source` under the normative grammar.
    pub fn parse(source: &str) -> Result<ScalarExpr> {
        let tokens = lex(source)?;
        let mut parser = Parser { tokens: &tokens, pos: 0 };
        let expr = parser.expr()?;
        match parser.peek() {
            (TokenKind::End, _) => Ok(expr),
            (kind, offset) => Err(Error::Syntax {
                offset,
                expected: format!("end of input, found {}", kind.describe()),
            }),
        }
    }

    /// Evaluate against a context. Either returns a finite value or a
    /// domain error; never returns NaN or an infinity.
    pub fn eval(&self, ctx: &EvalContext) -> Result<f64> {
        let v = match self {
            ScalarExpr::Num(v) => *v,
            ScalarExpr::Const(c) => c.value(),
            ScalarExpr::Var(Var::T) => ctx.t,
            ScalarExpr::Var(Var::Eps) => ctx.eps,
            ScalarExpr::Var(Var::State(k)) => {
                if *k == 0 || *k > ctx.x.len() {
                    return Err(Error::UnboundVar(format!("x{k}")));
                }
                ctx.x[*k - 1]
            }
            ScalarExpr::Neg(e) => -e.eval(ctx)?,
            ScalarExpr::Bin(op, a, b) => {
                let a = a.eval(ctx)?;
                let b = b.eval(ctx)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(Error::Domain(format!("division by zero: {a} / 0")));
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            ScalarExpr::Call(f, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(a.eval(ctx)?);
                }
                match f {
                    Func::Sin => vals[0].sin(),
                    Func::Cos => vals[0].cos(),
                    Func::Tan => vals[0].tan(),
                    Func::Exp => vals[0].exp(),
                    Func::Log => {
                        if vals[0] <= 0.0 {
                            return Err(Error::Domain(format!("log of non-positive value {}", vals[0])));
                        }
                        vals[0].ln()
                    }
                    Func::Sqrt => {
                        if vals[0] < 0.0 {
                            return Err(Error::Domain(format!("sqrt of negative value {}", vals[0])));
                        }
                        vals[0].sqrt()
                    }
                    Func::Abs => vals[0].abs(),
                    Func::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
                    Func::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("non-finite result in `{self}`")))
        }
    }

    /// Largest state index referenced anywhere in the tree (0 if none).
    pub fn max_state_index(&self) -> usize {
        match self {
            ScalarExpr::Num(_) | ScalarExpr::Const(_) => 0,
            ScalarExpr::Var(Var::State(k)) => *k,
            ScalarExpr::Var(_) => 0,
            ScalarExpr::Neg(e) => e.max_state_index(),
            ScalarExpr::Bin(_, a, b) => a.max_state_index().max(b.max_state_index()),
            ScalarExpr::Call(_, args) => args.iter().map(|a| a.max_state_index()).max().unwrap_or(0),
        }
    }

    pub fn uses_state(&self) -> bool {
        self.max_state_index() > 0
    }

    pub fn uses_eps(&self) -> bool {
        match self {
            ScalarExpr::Num(_) | ScalarExpr::Const(_) => false,
            ScalarExpr::Var(v) => matches!(v, Var::Eps),
            ScalarExpr::Neg(e) => e.uses_eps(),
            ScalarExpr::Bin(_, a, b) => a.uses_eps() || b.uses_eps(),
            ScalarExpr::Call(_, args) => args.iter().any(|a| a.uses_eps()),
        }
    }

    // Precedence used by the printer: 1 add/sub, 2 mul/div, 3 unary minus
    // (and negative literals, which reparse through unary minus), 4 power,
    // 5 atoms.
    fn precedence(&self) -> u8 {
        match self {
            ScalarExpr::Num(v) if *v < 0.0 || v.is_sign_negative() => 3,
            ScalarExpr::Num(_) | ScalarExpr::Const(_) | ScalarExpr::Var(_) | ScalarExpr::Call(..) => 5,
            ScalarExpr::Neg(_) => 3,
            ScalarExpr::Bin(BinOp::Pow, ..) => 4,
            ScalarExpr::Bin(BinOp::Mul, ..) | ScalarExpr::Bin(BinOp::Div, ..) => 2,
            ScalarExpr::Bin(..) => 1,
        }
    }

    fn write(&self, out: &mut String, min_prec: u8) {
        let prec = self.precedence();
        let parens = prec < min_prec;
        if parens {
            out.push('(');
        }
        match self {
            ScalarExpr::Num(v) => out.push_str(&format!("{v}")),
            ScalarExpr::Const(c) => out.push_str(c.name()),
            ScalarExpr::Var(v) => out.push_str(&v.name()),
            ScalarExpr::Neg(e) => {
                out.push('-');
                // factor := '-'* power, so the operand must print at
                // power precedence or get wrapped.
                e.write(out, 4);
            }
            ScalarExpr::Bin(op, a, b) => {
                let (sym, left_min, right_min) = match op {
                    BinOp::Add => (" + ", 1, 2),
                    BinOp::Sub => (" - ", 1, 2),
                    BinOp::Mul => (" * ", 2, 3),
                    BinOp::Div => (" / ", 2, 3),
                    // power := atom '^' factor
                    BinOp::Pow => ("^", 5, 3),
                };
                a.write(out, left_min);
                out.push_str(sym);
                b.write(out, right_min);
            }
            ScalarExpr::Call(f, args) => {
                out.push_str(f.name());
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    a.write(out, 1);
                }
                out.push(')');
            }
        }
        if parens {
            out.push(')');
        }
    }
}

impl fmt::Display for ScalarExpr {
    /// Prints text that reparses to an evaluation-identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write(&mut s, 0);
        f.write_str(&s)
    }
}

impl std::str::FromStr for ScalarExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<ScalarExpr> {
        ScalarExpr::parse(s)
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Num(_) => "number".to_string(),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Plus => "'+'".to_string(),
            TokenKind::Minus => "'-'".to_string(),
            TokenKind::Star => "'*'".to_string(),
            TokenKind::Slash => "'/'".to_string(),
            TokenKind::Caret => "'^'".to_string(),
            TokenKind::LParen => "'('".to_string(),
            TokenKind::RParen => "')'".to_string(),
            TokenKind::Comma => "','".to_string(),
            TokenKind::End => "end of input".to_string(),
        }
    }
}

struct Token {
    kind: TokenKind,
    offset: usize,
}

fn lex(source: &str) -> Result<Vec<Token>> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
            }
            b'+' => push_simple(&mut tokens, TokenKind::Plus, start, &mut i),
            b'-' => push_simple(&mut tokens, TokenKind::Minus, start, &mut i),
            b'*' => push_simple(&mut tokens, TokenKind::Star, start, &mut i),
            b'/' => push_simple(&mut tokens, TokenKind::Slash, start, &mut i),
            b'^' => push_simple(&mut tokens, TokenKind::Caret, start, &mut i),
            b'(' => push_simple(&mut tokens, TokenKind::LParen, start, &mut i),
            b')' => push_simple(&mut tokens, TokenKind::RParen, start, &mut i),
            b',' => push_simple(&mut tokens, TokenKind::Comma, start, &mut i),
            b'0'..=b'9' => {
                let value = lex_number(bytes, &mut i)?;
                tokens.push(Token { kind: TokenKind::Num(value), offset: start });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let name = &source[start..i];
                tokens.push(Token { kind: TokenKind::Ident(name.to_string()), offset: start });
            }
            _ => {
                return Err(Error::Syntax {
                    offset: start,
                    expected: format!("a token, found byte {:?}", c as char),
                })
            }
        }
    }
    tokens.push(Token { kind: TokenKind::End, offset: bytes.len() });
    Ok(tokens)
}

fn push_simple(tokens: &mut Vec<Token>, kind: TokenKind, start: usize, i: &mut usize) {
    tokens.push(Token { kind, offset: start });
    *i += 1;
}

fn lex_number(bytes: &[u8], i: &mut usize) -> Result<f64> {
    let start = *i;
    while *i < bytes.len() && bytes[*i].is_ascii_digit() {
        *i += 1;
    }
    if *i < bytes.len() && bytes[*i] == b'.' {
        *i += 1;
        if *i >= bytes.len() || !bytes[*i].is_ascii_digit() {
            return Err(Error::Syntax {
                offset: *i,
                expected: "digit after decimal point".to_string(),
            });
        }
        while *i < bytes.len() && bytes[*i].is_ascii_digit() {
            *i += 1;
        }
    }
    if *i < bytes.len() && (bytes[*i] == b'e' || bytes[*i] == b'E') {
        let mut j = *i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            *i = j;
            while *i < bytes.len() && bytes[*i].is_ascii_digit() {
                *i += 1;
            }
        }
        // otherwise the 'e' is an identifier (the constant), not an exponent
    }
    let text = std::str::from_utf8(&bytes[start..*i]).expect("ascii digits");
    text.parse::<f64>().map_err(|_| Error::Syntax {
        offset: start,
        expected: format!("well-formed number, found `{text}`"),
    })
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> (TokenKind, usize) {
        let t = &self.tokens[self.pos];
        (t.kind.clone(), t.offset)
    }

    fn bump(&mut self) -> (TokenKind, usize) {
        let t = &self.tokens[self.pos];
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        (t.kind.clone(), t.offset)
    }

    fn expect(&mut self, kind: &TokenKind, expected: &str) -> Result<()> {
        let (k, offset) = self.peek();
        if &k == kind {
            self.bump();
            Ok(())
        } else {
            Err(Error::Syntax {
                offset,
                expected: format!("{expected}, found {}", k.describe()),
            })
        }
    }

    fn expr(&mut self) -> Result<ScalarExpr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().0 {
                TokenKind::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = ScalarExpr::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                TokenKind::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = ScalarExpr::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ScalarExpr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek().0 {
                TokenKind::Star => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = ScalarExpr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                TokenKind::Slash => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = ScalarExpr::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<ScalarExpr> {
        if self.peek().0 == TokenKind::Minus {
            self.bump();
            let inner = self.factor()?;
            return Ok(ScalarExpr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ScalarExpr> {
        let base = self.atom()?;
        if self.peek().0 == TokenKind::Caret {
            self.bump();
            let exponent = self.factor()?;
            return Ok(ScalarExpr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ScalarExpr> {
        let (kind, offset) = self.bump();
        match kind {
            TokenKind::Num(v) => Ok(ScalarExpr::Num(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(&TokenKind::RParen, "')'")?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.ident(&name, offset),
            other => Err(Error::Syntax {
                offset,
                expected: format!("number, identifier, '(' or '-', found {}", other.describe()),
            }),
        }
    }

    fn ident(&mut self, name: &str, offset: usize) -> Result<ScalarExpr> {
        if let Some(func) = Func::from_name(name) {
            self.expect(&TokenKind::LParen, &format!("'(' after function `{name}`"))?;
            let mut args = vec![self.expr()?];
            while self.peek().0 == TokenKind::Comma {
                self.bump();
                args.push(self.expr()?);
            }
            self.expect(&TokenKind::RParen, "')' or ','")?;
            let arity_ok = match func {
                Func::Min | Func::Max => args.len() >= 2,
                _ => args.len() == 1,
            };
            if !arity_ok {
                return Err(Error::Syntax {
                    offset,
                    expected: match func {
                        Func::Min | Func::Max => format!("at least 2 arguments to `{name}`, found {}", args.len()),
                        _ => format!("exactly 1 argument to `{name}`, found {}", args.len()),
                    },
                });
            }
            return Ok(ScalarExpr::Call(func, args));
        }
        match name {
            "t" => Ok(ScalarExpr::Var(Var::T)),
            "eps" => Ok(ScalarExpr::Var(Var::Eps)),
            "pi" => Ok(ScalarExpr::Const(Constant::Pi)),
            "e" => Ok(ScalarExpr::Const(Constant::E)),
            _ => {
                if let Some(rest) = name.strip_prefix('x') {
                    if !rest.is_empty()
                        && rest.bytes().all(|b| b.is_ascii_digit())
                        && !rest.starts_with('0')
                    {
                        let k: usize = rest.parse().expect("checked digits");
                        return Ok(ScalarExpr::Var(Var::State(k)));
                    }
                }
                Err(Error::Syntax {
                    offset,
                    expected: format!(
                        "known identifier (t, eps, pi, e, x1..xn or a function name), found `{name}`"
                    ),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn eval_str(src: &str, t: f64, eps: f64, x: &[f64]) -> Result<f64> {
        ScalarExpr::parse(src)?.eval(&EvalContext::new(t, eps, x))
    }

    #[test]
    fn pythagorean_identity() {
        let e = ScalarExpr::parse("sin(t)^2+cos(t)^2").unwrap();
        for t in [0.0, 0.5, 1.0, 3.7, 100.0] {
            let v = e.eval(&EvalContext::time(t)).unwrap();
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn rational_decay_values() {
        assert_abs_diff_eq!(eval_str("1/(1+t^2)^(3/2)", 0.0, 0.0, &[]).unwrap(), 1.0);
        // 2^(-3/2)
        assert_abs_diff_eq!(
            eval_str("1/(1+t^2)^(3/2)", 1.0, 0.0, &[]).unwrap(),
            0.3535533905932738,
            epsilon = 1e-12
        );
    }

    #[test]
    fn eps_expressions() {
        assert_eq!(eval_str("eps*(2+eps)", 0.0, 0.0, &[]).unwrap(), 0.0);
        // sqrt(0.21)
        assert_abs_diff_eq!(
            eval_str("sqrt(eps*(2+eps))*exp(-t)", 0.0, 0.1, &[]).unwrap(),
            0.4582575694955840,
            epsilon = 1e-12
        );
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(eval_str("log(-1)", 0.0, 0.0, &[]), Err(Error::Domain(_))));
        assert!(matches!(eval_str("sqrt(-2)", 0.0, 0.0, &[]), Err(Error::Domain(_))));
        assert!(matches!(eval_str("1/t", 0.0, 0.0, &[]), Err(Error::Domain(_))));
        assert!(matches!(eval_str("exp(1e9)", 0.0, 0.0, &[]), Err(Error::Domain(_))));
        assert!(matches!(eval_str("(-2)^(1/2)", 0.0, 0.0, &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn unbound_state_variable() {
        assert!(matches!(eval_str("x3", 0.0, 0.0, &[1.0, 2.0]), Err(Error::UnboundVar(_))));
        assert_eq!(eval_str("x2", 0.0, 0.0, &[1.0, 2.0]).unwrap(), 2.0);
    }

    #[test]
    fn precedence_table() {
        assert_eq!(eval_str("2^3^2", 0.0, 0.0, &[]).unwrap(), 512.0);
        assert_eq!(eval_str("-2^2", 0.0, 0.0, &[]).unwrap(), -4.0);
        assert_eq!(eval_str("1-2-3", 0.0, 0.0, &[]).unwrap(), -4.0);
        assert_eq!(eval_str("2^-2", 0.0, 0.0, &[]).unwrap(), 0.25);
        assert_eq!(eval_str("--2", 0.0, 0.0, &[]).unwrap(), 2.0);
        assert_eq!(eval_str("6/3/2", 0.0, 0.0, &[]).unwrap(), 1.0);
        assert_eq!(eval_str("-2*3", 0.0, 0.0, &[]).unwrap(), -6.0);
    }

    #[test]
    fn scientific_notation_and_constants() {
        assert_eq!(eval_str("1.5e2", 0.0, 0.0, &[]).unwrap(), 150.0);
        assert_eq!(eval_str("1e-2", 0.0, 0.0, &[]).unwrap(), 0.01);
        assert_abs_diff_eq!(eval_str("pi", 0.0, 0.0, &[]).unwrap(), std::f64::consts::PI);
        // `2e` must lex as the literal 2 followed by the constant e, which
        // is a syntax error (no operator), not a malformed number.
        assert!(ScalarExpr::parse("2e").is_err());
        assert_abs_diff_eq!(eval_str("2*e", 0.0, 0.0, &[]).unwrap(), 2.0 * std::f64::consts::E);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match ScalarExpr::parse("1+ (2*").unwrap_err() {
            Error::Syntax { offset, .. } => assert_eq!(offset, 6),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match ScalarExpr::parse("sin(t") {
            Err(Error::Syntax { offset, expected }) => {
                assert_eq!(offset, 5);
                assert!(expected.contains("')'"), "{expected}");
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
        match ScalarExpr::parse("foo+1") {
            Err(Error::Syntax { offset, expected }) => {
                assert_eq!(offset, 0);
                assert!(expected.contains("foo"), "{expected}");
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
        // x0 is not a state variable
        assert!(ScalarExpr::parse("x0").is_err());
        assert!(ScalarExpr::parse("min(1)").is_err());
        assert!(ScalarExpr::parse("sin(1,2)").is_err());
        assert!(ScalarExpr::parse("1.").is_err());
    }

    #[test]
    fn print_round_trips() {
        let e = ScalarExpr::parse("t+1").unwrap();
        assert_eq!(e.to_string(), "t + 1");
        let back = ScalarExpr::parse(&e.to_string()).unwrap();
        assert_eq!(back, e);

        let e = ScalarExpr::parse("-(t^2)").unwrap();
        let back = ScalarExpr::parse(&e.to_string()).unwrap();
        let ctx = EvalContext::time(2.0);
        assert_eq!(back.eval(&ctx).unwrap(), -4.0);
        assert_eq!(back.eval(&ctx).unwrap(), e.eval(&ctx).unwrap());

        assert_eq!(ScalarExpr::Num(0.0).to_string(), "0");
    }

    #[test]
    fn print_parenthesizes_structure() {
        // A negative literal in the base of a power must not reparse as
        // negation of the whole power.
        let e = ScalarExpr::Bin(
            BinOp::Pow,
            Box::new(ScalarExpr::Num(-2.0)),
            Box::new(ScalarExpr::Num(2.0)),
        );
        let back = ScalarExpr::parse(&e.to_string()).unwrap();
        let ctx = EvalContext::time(0.0);
        assert_eq!(e.eval(&ctx).unwrap(), 4.0);
        assert_eq!(back.eval(&ctx).unwrap(), 4.0);

        let e = ScalarExpr::parse("(1+t)*(2-t)").unwrap();
        let back = ScalarExpr::parse(&e.to_string()).unwrap();
        assert_eq!(back, e);

        let e = ScalarExpr::parse("(2^3)^2").unwrap();
        let back = ScalarExpr::parse(&e.to_string()).unwrap();
        assert_eq!(back.eval(&EvalContext::time(0.0)).unwrap(), 64.0);

        let e = ScalarExpr::parse("min(t, eps, 3)").unwrap();
        let back = ScalarExpr::parse(&e.to_string()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn eval_is_pure() {
        let e = ScalarExpr::parse("sin(t)^2 + exp(-t)*x1 / (1 + eps)").unwrap();
        let x = [0.7];
        let ctx = EvalContext::new(1.3, 0.2, &x);
        let a = e.eval(&ctx).unwrap();
        let b = e.eval(&ctx).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
