//! Closed-form scalar expressions in `t` with named parameters.
//!
//! Grammar (left-associative, `^` binds tightest, unary minus applies to a
//! whole power so that `-x^2 = -(x^2)`):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' '-'? integer)?
//! base   := number | 't' | ident | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp
//! ```

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::jet::MatrixJet;
use crate::linalg::{GridFunction, Matrix};
use crate::{Error, Result};

pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    Param(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at byte {offset}: expected {}", expected.join(" | "))]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<&'static str>,
}

pub fn parse(text: &str) -> core::result::Result<Expr, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error(&["+", "-", "*", "/", "^", "end of input"]));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, expected: &[&'static str]) -> ParseError {
        ParseError {
            offset: self.pos,
            expected: expected.to_vec(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> core::result::Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> core::result::Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.peek() == Some(b'/') {
                self.eat(b'/');
                let at = self.pos;
                let rhs = self.factor()?;
                if matches!(rhs, Expr::Num(x) if x == 0.0) {
                    return Err(ParseError {
                        offset: at,
                        expected: vec!["nonzero denominator"],
                    });
                }
                lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> core::result::Result<Expr, ParseError> {
        if self.eat(b'-') {
            return Ok(match self.factor()? {
                Expr::Num(x) => Expr::Num(-x),
                e => Expr::Neg(Box::new(e)),
            });
        }
        let base = self.base()?;
        if self.eat(b'^') {
            let neg = self.eat(b'-');
            let start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            let digits = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            let n: i32 = digits.parse().map_err(|_| ParseError {
                offset: start,
                expected: vec!["integer exponent"],
            })?;
            self.skip_ws();
            return Ok(Expr::Pow(Box::new(base), if neg { -n } else { n }));
        }
        Ok(base)
    }

    fn base(&mut self) -> core::result::Result<Expr, ParseError> {
        const BASE: &[&str] = &["number", "t", "identifier", "function call", "("];
        match self.peek() {
            Some(b'(') => {
                self.eat(b'(');
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error(&["+", "-", "*", "/", "^", ")"]));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                self.skip_ws();
                if let Some(f) = Func::from_name(name) {
                    if !self.eat(b'(') {
                        return Err(self.error(&["("]));
                    }
                    let arg = self.expr()?;
                    if !self.eat(b')') {
                        return Err(self.error(&["+", "-", "*", "/", "^", ")"]));
                    }
                    Ok(Expr::Call(f, Box::new(arg)))
                } else if name == "t" {
                    Ok(Expr::Time)
                } else {
                    Ok(Expr::Param(name.to_string()))
                }
            }
            _ => Err(self.error(BASE)),
        }
    }

    fn number(&mut self) -> core::result::Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.peek().is_some_and(|c| c.is_ascii_digit()) {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.peek() == Some(b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(ParseError {
                offset: start,
                expected: vec!["digit"],
            });
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            }
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        let v: f64 = text.parse().map_err(|_| ParseError {
            offset: start,
            expected: vec!["number"],
        })?;
        self.skip_ws();
        Ok(Expr::Num(v))
    }
}

// Binding strength used by the printer: 1 sums, 2 products, 3 unary minus,
// 4 powers, 5 atoms.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Num(x) if x.is_sign_negative() => 3,
        Expr::Pow(..) => 4,
        _ => 5,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn wrap(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
            if prec(e) < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(x) => write!(f, "{x}"),
            Expr::Time => f.write_str("t"),
            Expr::Param(p) => f.write_str(p),
            Expr::Neg(a) => {
                f.write_str("-")?;
                wrap(f, a, 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                wrap(f, a, 1)?;
                f.write_str(if matches!(self, Expr::Add(..)) { " + " } else { " - " })?;
                wrap(f, b, 2)
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                wrap(f, a, 2)?;
                f.write_str(if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                wrap(f, b, 3)
            }
            Expr::Pow(a, n) => {
                wrap(f, a, 5)?;
                write!(f, "^{n}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl Expr {
    pub fn num(x: f64) -> Self {
        Expr::Num(x)
    }

    pub fn param(name: &str) -> Self {
        Expr::Param(name.to_string())
    }

    pub fn zero() -> Self {
        Expr::Num(0.0)
    }

    pub fn one() -> Self {
        Expr::Num(1.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(x) if *x == 0.0)
    }

    fn is_one(&self) -> bool {
        matches!(self, Expr::Num(x) if *x == 1.0)
    }

    fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(x) => Some(*x),
            _ => None,
        }
    }

    /// Whether the expression depends on `t`.
    pub fn depends_on_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Num(_) | Expr::Param(_) => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.depends_on_time(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on_time() || b.depends_on_time()
            }
        }
    }

    /// Names of the parameters used, sorted and deduplicated.
    pub fn parameters(&self) -> Vec<String> {
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Param(p) => out.push(p.clone()),
                Expr::Num(_) | Expr::Time => {}
                Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => walk(a, out),
                Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut v = Vec::new();
        walk(self, &mut v);
        v.sort();
        v.dedup();
        v
    }

    pub fn eval(&self, t: f64, params: &Params) -> Result<f64> {
        let v = self.eval_raw(t, params)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonfiniteResult)
        }
    }

    fn eval_raw(&self, t: f64, params: &Params) -> Result<f64> {
        Ok(match self {
            Expr::Num(x) => *x,
            Expr::Time => t,
            Expr::Param(p) => *params.get(p).ok_or_else(|| Error::UnboundParameter(p.clone()))?,
            Expr::Neg(a) => -a.eval_raw(t, params)?,
            Expr::Add(a, b) => a.eval_raw(t, params)? + b.eval_raw(t, params)?,
            Expr::Sub(a, b) => a.eval_raw(t, params)? - b.eval_raw(t, params)?,
            Expr::Mul(a, b) => a.eval_raw(t, params)? * b.eval_raw(t, params)?,
            Expr::Div(a, b) => a.eval_raw(t, params)? / b.eval_raw(t, params)?,
            Expr::Pow(a, n) => powi(a.eval_raw(t, params)?, *n),
            Expr::Call(func, a) => {
                let x = a.eval_raw(t, params)?;
                match func {
                    Func::Sin => libm::sin(x),
                    Func::Cos => libm::cos(x),
                    Func::Exp => libm::exp(x),
                }
            }
        })
    }

    /// Taylor coefficients `c_0..c_order` of the expression around `t`.
    pub fn eval_taylor(&self, t: f64, params: &Params, order: usize) -> Result<Vec<f64>> {
        let c = self.taylor_raw(t, params, order)?;
        if c.iter().all(|x| x.is_finite()) {
            Ok(c)
        } else {
            Err(Error::NonfiniteResult)
        }
    }

    fn taylor_raw(&self, t: f64, params: &Params, k: usize) -> Result<Vec<f64>> {
        let constant = |x: f64| {
            let mut v = vec![0.0; k + 1];
            v[0] = x;
            v
        };
        Ok(match self {
            Expr::Num(x) => constant(*x),
            Expr::Param(_) => constant(self.eval_raw(t, params)?),
            Expr::Time => {
                let mut v = constant(t);
                if k > 0 {
                    v[1] = 1.0;
                }
                v
            }
            Expr::Neg(a) => a.taylor_raw(t, params, k)?.into_iter().map(|x| -x).collect(),
            Expr::Add(a, b) => zip(a.taylor_raw(t, params, k)?, b.taylor_raw(t, params, k)?, |x, y| x + y),
            Expr::Sub(a, b) => zip(a.taylor_raw(t, params, k)?, b.taylor_raw(t, params, k)?, |x, y| x - y),
            Expr::Mul(a, b) => series_mul(&a.taylor_raw(t, params, k)?, &b.taylor_raw(t, params, k)?),
            Expr::Div(a, b) => series_div(&a.taylor_raw(t, params, k)?, &b.taylor_raw(t, params, k)?),
            Expr::Pow(a, n) => {
                let base = a.taylor_raw(t, params, k)?;
                let mut acc = constant(1.0);
                for _ in 0..n.unsigned_abs() {
                    acc = series_mul(&acc, &base);
                }
                if *n < 0 {
                    series_div(&constant(1.0), &acc)
                } else {
                    acc
                }
            }
            Expr::Call(func, a) => {
                let x = a.taylor_raw(t, params, k)?;
                match func {
                    Func::Exp => series_exp(&x),
                    Func::Sin => series_sin_cos(&x).0,
                    Func::Cos => series_sin_cos(&x).1,
                }
            }
        })
    }

    /// Exact `d/dt`, with literal subtrees folded.
    pub fn differentiate(&self) -> Expr {
        match self {
            Expr::Num(_) | Expr::Param(_) => Expr::zero(),
            Expr::Time => Expr::one(),
            Expr::Neg(a) => neg(a.differentiate()),
            Expr::Add(a, b) => add(a.differentiate(), b.differentiate()),
            Expr::Sub(a, b) => sub(a.differentiate(), b.differentiate()),
            Expr::Mul(a, b) => add(
                mul(a.differentiate(), (**b).clone()),
                mul((**a).clone(), b.differentiate()),
            ),
            Expr::Div(a, b) => sub(
                div(a.differentiate(), (**b).clone()),
                div(mul((**a).clone(), b.differentiate()), pow((**b).clone(), 2)),
            ),
            Expr::Pow(a, n) => mul(mul(Expr::Num(*n as f64), pow((**a).clone(), n - 1)), a.differentiate()),
            Expr::Call(func, a) => {
                let inner = a.differentiate();
                let outer = match func {
                    Func::Sin => Expr::Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Expr::Call(Func::Sin, a.clone())),
                    Func::Exp => self.clone(),
                };
                mul(outer, inner)
            }
        }
    }

    /// Substitutes parameter values, leaving `t` symbolic.
    pub fn bind(&self, params: &Params) -> Expr {
        match self {
            Expr::Param(p) => params.get(p).map_or_else(|| self.clone(), |v| Expr::Num(*v)),
            Expr::Num(_) | Expr::Time => self.clone(),
            Expr::Neg(a) => neg(a.bind(params)),
            Expr::Add(a, b) => add(a.bind(params), b.bind(params)),
            Expr::Sub(a, b) => sub(a.bind(params), b.bind(params)),
            Expr::Mul(a, b) => mul(a.bind(params), b.bind(params)),
            Expr::Div(a, b) => div(a.bind(params), b.bind(params)),
            Expr::Pow(a, n) => pow(a.bind(params), *n),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.bind(params))),
        }
    }
}

fn powi(x: f64, n: i32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..n.unsigned_abs() {
        acc *= x;
    }
    if n < 0 {
        1.0 / acc
    } else {
        acc
    }
}

fn zip(a: Vec<f64>, b: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect()
}

fn series_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.len()).map(|n| (0..=n).map(|j| a[j] * b[n - j]).sum()).collect()
}

fn series_div(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = Vec::with_capacity(a.len());
    for n in 0..a.len() {
        let s: f64 = (1..=n).map(|j| b[j] * c[n - j]).sum();
        c.push((a[n] - s) / b[0]);
    }
    c
}

fn series_exp(a: &[f64]) -> Vec<f64> {
    let mut e = vec![libm::exp(a[0])];
    for n in 1..a.len() {
        let s: f64 = (1..=n).map(|j| j as f64 * a[j] * e[n - j]).sum();
        e.push(s / n as f64);
    }
    e
}

fn series_sin_cos(a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut s = vec![libm::sin(a[0])];
    let mut c = vec![libm::cos(a[0])];
    for n in 1..a.len() {
        let ds: f64 = (1..=n).map(|j| j as f64 * a[j] * c[n - j]).sum();
        let dc: f64 = (1..=n).map(|j| j as f64 * a[j] * s[n - j]).sum();
        s.push(ds / n as f64);
        c.push(-dc / n as f64);
    }
    (s, c)
}

// Folding constructors.

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(x) => Expr::Num(-x),
        Expr::Neg(inner) => *inner,
        e => Expr::Neg(Box::new(e)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => match b {
            Expr::Neg(inner) => Expr::Sub(Box::new(a), inner),
            b => Expr::Add(Box::new(a), Box::new(b)),
        },
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => match b {
            Expr::Neg(inner) => Expr::Add(Box::new(a), inner),
            b => Expr::Sub(Box::new(a), Box::new(b)),
        },
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::zero(),
        _ if a.is_one() => b,
        _ if b.is_one() => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => match (a, b) {
            (Expr::Neg(x), Expr::Neg(y)) => mul(*x, *y),
            (Expr::Neg(x), y) => neg(mul(*x, y)),
            (x, Expr::Neg(y)) => neg(mul(x, *y)),
            (x, y) => Expr::Mul(Box::new(x), Box::new(y)),
        },
    }
}

/// Folding quotient. Panics on a literal zero denominator, which the parser
/// rejects and no internal construction produces.
pub fn div(a: Expr, b: Expr) -> Expr {
    assert!(!b.is_zero(), "literal zero denominator");
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) => Expr::Num(x / y),
        (Some(x), _) if x == 0.0 => Expr::zero(),
        _ if b.is_one() => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, n: i32) -> Expr {
    match (n, a.as_num()) {
        (0, _) => Expr::one(),
        (1, _) => a,
        (_, Some(x)) => Expr::Num(powi(x, n)),
        _ => Expr::Pow(Box::new(a), n),
    }
}

pub fn sin(a: Expr) -> Expr {
    Expr::Call(Func::Sin, Box::new(a))
}

pub fn cos(a: Expr) -> Expr {
    Expr::Call(Func::Cos, Box::new(a))
}

pub fn exp(a: Expr) -> Expr {
    Expr::Call(Func::Exp, Box::new(a))
}

pub fn t() -> Expr {
    Expr::Time
}

/// Dense matrix of expressions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Expr>,
}

impl ExprMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Expr::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { Expr::one() } else { Expr::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Expr) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self { rows, cols, entries }
    }

    pub fn from_constant(m: &Matrix) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| Expr::Num(m[(i, j)]))
    }

    /// Builds from row-major expression texts.
    pub fn parse_rows(rows: &[&[&str]]) -> core::result::Result<Self, ParseError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut out = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged expression rows");
            for (j, s) in r.iter().enumerate() {
                out.set(i, j, parse(s)?);
            }
        }
        Ok(out)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Expr {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: Expr) {
        self.entries[i * self.cols + j] = e;
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &Expr)> {
        self.entries
            .iter()
            .enumerate()
            .map(move |(k, e)| (k / self.cols, k % self.cols, e))
    }

    pub fn map(&self, f: impl Fn(&Expr) -> Expr) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn differentiate(&self) -> Self {
        self.map(Expr::differentiate)
    }

    pub fn neg(&self) -> Self {
        self.map(|e| neg(e.clone()))
    }

    pub fn scale(&self, s: &Expr) -> Self {
        self.map(|e| mul(s.clone(), e.clone()))
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        Self::from_fn(self.rows, self.cols, |i, j| {
            add(self.get(i, j).clone(), rhs.get(i, j).clone())
        })
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        Self::from_fn(self.rows, self.cols, |i, j| {
            sub(self.get(i, j).clone(), rhs.get(i, j).clone())
        })
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in mul");
        Self::from_fn(self.rows, rhs.cols, |i, j| {
            (0..self.cols).fold(Expr::zero(), |acc, k| {
                add(acc, mul(self.get(i, k).clone(), rhs.get(k, j).clone()))
            })
        })
    }

    /// Assembles a block matrix; every block row must share a height and
    /// every block column a width.
    pub fn blocks(grid: &[&[&ExprMatrix]]) -> Self {
        let heights: Vec<usize> = grid.iter().map(|r| r[0].rows).collect();
        let widths: Vec<usize> = grid[0].iter().map(|b| b.cols).collect();
        let mut out = Self::zeros(heights.iter().sum(), widths.iter().sum());
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (bj, b) in row.iter().enumerate() {
                assert_eq!((b.rows, b.cols), (heights[bi], widths[bj]), "block shape mismatch");
                for (i, j, e) in b.entries() {
                    out.set(r0 + i, c0 + j, e.clone());
                }
                c0 += widths[bj];
            }
            r0 += heights[bi];
        }
        out
    }

    pub fn bind(&self, params: &Params) -> Self {
        self.map(|e| e.bind(params))
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(|e| !e.depends_on_time())
    }

    pub fn eval(&self, t: f64, params: &Params) -> Result<Matrix> {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for (i, j, e) in self.entries() {
            m[(i, j)] = e.eval(t, params).map_err(|err| located(i, j, t, err))?;
        }
        Ok(m)
    }

    /// Matrix jet of the Taylor expansion around `t`.
    pub fn taylor(&self, t: f64, params: &Params, order: usize) -> Result<MatrixJet> {
        let mut coeffs = vec![Matrix::zeros(self.rows, self.cols); order + 1];
        for (i, j, e) in self.entries() {
            if e.is_zero() {
                continue;
            }
            let c = e.eval_taylor(t, params, order).map_err(|err| located(i, j, t, err))?;
            for (k, v) in c.into_iter().enumerate() {
                coeffs[k][(i, j)] = v;
            }
        }
        Ok(MatrixJet::from_coeffs(coeffs))
    }

    pub fn sample(&self, t0: f64, t1: f64, n: usize, params: &Params) -> Result<GridFunction> {
        GridFunction::sample(t0, t1, n, |t| self.eval(t, params))
    }
}

fn located(i: usize, j: usize, t: f64, err: Error) -> Error {
    Error::EvalAt {
        i,
        j,
        t,
        source: Box::new(err),
    }
}

impl fmt::Display for ExprMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            f.write_str("[")?;
            for j in 0..self.cols {
                if j > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
            f.write_str("]\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::format;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn rho() -> Params {
        let mut m = Params::new();
        m.insert("rho".into(), 1.5);
        m
    }

    #[test]
    fn parses_literals_and_structure() {
        assert_eq!(p("0"), Expr::Num(0.0));
        let e = p("-2*rho*cos(t)^2");
        let expected = Expr::Mul(
            Box::new(Expr::Mul(Box::new(Expr::Num(-2.0)), Box::new(Expr::param("rho")))),
            Box::new(Expr::Pow(Box::new(cos(t())), 2)),
        );
        assert_eq!(e, expected);
        assert_eq!(p("-x^2"), Expr::Neg(Box::new(Expr::Pow(Box::new(Expr::param("x")), 2))));
        assert_eq!(p("1 - 2 - 3").eval(0.0, &Params::new()).unwrap(), -4.0);
        assert_eq!(p("8/4/2").eval(0.0, &Params::new()).unwrap(), 1.0);
        assert_eq!(p("2.5e-1").eval(0.0, &Params::new()).unwrap(), 0.25);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let e = parse("sin(t").unwrap_err();
        assert_eq!(e.offset, 5);
        assert!(e.expected.contains(&")"));
        assert_eq!(parse("1 +").unwrap_err().offset, 3);
        assert_eq!(parse("sin t").unwrap_err().offset, 4);
        assert_eq!(parse("1/0").unwrap_err().expected, vec!["nonzero denominator"]);
        assert_eq!(parse("t^x").unwrap_err().offset, 2);
        assert_eq!(parse("(t))").unwrap_err().offset, 3);
        assert!(parse("").is_err());
    }

    #[test]
    fn evaluation() {
        let none = Params::new();
        assert_eq!(p("t^2").eval(3.0, &none).unwrap(), 9.0);
        assert_eq!(p("sin(t)").eval(0.0, &none).unwrap(), 0.0);
        assert!(matches!(p("rho").eval(0.0, &none), Err(Error::UnboundParameter(n)) if n == "rho"));
        assert!(matches!(p("1/t").eval(0.0, &none), Err(Error::NonfiniteResult)));
        assert!((p("2^-2").eval(0.0, &none).unwrap() - 0.25).abs() < 1e-16);
    }

    #[test]
    fn b_vector_has_constant_norm() {
        let b = ExprMatrix::parse_rows(&[&["-2*rho*cos(t)^2"], &["-2*rho*sin(t)*cos(t)"], &["2*rho*sin(t)"]]).unwrap();
        let btb = b.transpose().mul(&b);
        for k in 0..10 {
            let t = 0.37 * k as f64;
            let v = btb.eval(t, &rho()).unwrap()[(0, 0)];
            assert!((v - 4.0 * 1.5 * 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives() {
        let none = Params::new();
        assert_eq!(p("t^2").differentiate(), mul(Expr::Num(2.0), t()));
        assert_eq!(p("sin(t)").differentiate(), cos(t()));
        assert_eq!(p("3*rho").differentiate(), Expr::zero());
        let d = p("exp(-t)/t").differentiate();
        let x: f64 = 0.8;
        let exact = -(-x).exp() / x - (-x).exp() / (x * x);
        assert!((d.eval(x, &none).unwrap() - exact).abs() < 1e-14);
    }

    #[test]
    fn taylor_matches_repeated_differentiation() {
        let e = p("exp(sin(t))*cos(2*t)^2/(2 + t^3) - t^-1");
        let params = Params::new();
        let x = 0.9;
        let c = e.eval_taylor(x, &params, 5).unwrap();
        let mut d = e.clone();
        let mut fact = 1.0;
        for (k, ck) in c.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            let v = d.eval(x, &params).unwrap() / fact;
            assert!((v - ck).abs() < 1e-10 * (1.0 + v.abs()), "order {k}: {v} vs {ck}");
            d = d.differentiate();
        }
    }

    #[test]
    fn matrix_ops_and_sampling() {
        let m = ExprMatrix::parse_rows(&[&["t", "1"], &["0", "t^2"]]).unwrap();
        let sq = m.mul(&m);
        let v = sq.eval(2.0, &Params::new()).unwrap();
        assert_eq!(v, Matrix::from_row_slice(2, 2, &[4.0, 6.0, 0.0, 16.0]));
        let g = ExprMatrix::identity(3).sample(0.0, 1.0, 9, &Params::new()).unwrap();
        assert!(g.values().iter().all(|x| *x == Matrix::identity(3, 3)));
        let bad = ExprMatrix::parse_rows(&[&["1", "q"]]).unwrap();
        match bad.eval(0.5, &Params::new()) {
            Err(Error::EvalAt { i: 0, j: 1, t, .. }) => assert_eq!(t, 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn printing_parenthesizes() {
        for s in [
            "(-2)^3",
            "-(a + b)",
            "a - (b - c)",
            "a/(b*c)",
            "(a + b)^2",
            "-t^2",
            "a*-b",
            "sin(-t)",
            "2^-3",
        ] {
            let e = p(s);
            assert_eq!(p(&format!("{e}")), e, "{s} printed as {e}");
        }
        assert_eq!(format!("{}", p("(-2)^3")), "(-2)^3");
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-5.0f64..5.0).prop_map(Expr::Num),
            (0i32..20).prop_map(|n| Expr::Num(n as f64)),
            Just(Expr::Time),
            prop_oneof![Just("a"), Just("b"), Just("rho")].prop_map(Expr::param),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    // `-0` re-parses as a literal zero, which the grammar rejects as a denominator
                    .prop_filter("literal zero denominator", |(_, b)| {
                        !b.is_zero() && !parse(&format!("{b}")).is_ok_and(|x| x.is_zero())
                    })
                    .prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
                (inner.clone(), -3i32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
                (inner, prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp)])
                    .prop_map(|(a, f)| Expr::Call(f, Box::new(a))),
            ]
        })
    }

    /// Smooth, singularity-free expressions for derivative checks.
    fn arb_smooth() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-2.0f64..2.0).prop_map(Expr::Num),
            Just(Expr::Time),
            Just(Expr::param("rho")),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                // denominators of the form 2 + sin(·) stay away from zero
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| { Expr::Div(Box::new(a), Box::new(add(Expr::Num(2.0), sin(b)))) }),
                (inner.clone(), 0i32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
                inner.clone().prop_map(sin),
                inner.prop_map(|a| cos(mul(Expr::Num(0.5), a))),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn print_parse_fixpoint(e in arb_expr()) {
            let once = parse(&format!("{e}")).unwrap();
            let twice = parse(&format!("{once}")).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(format!("{once}"), format!("{twice}"));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn derivative_matches_central_differences(e in arb_smooth(), ts in proptest::collection::vec(-2.0f64..2.0, 10)) {
            let params = rho();
            let d = e.differentiate();
            for t0 in ts {
                let (Ok(v), Ok(exact)) = (e.eval(t0, &params), d.eval(t0, &params)) else { continue };
                // Richardson-extrapolated central differences (fourth order),
                // with the gap between two step sizes as error estimate.
                let central = |h: f64| -> Option<f64> {
                    Some((e.eval(t0 + h, &params).ok()? - e.eval(t0 - h, &params).ok()?) / (2.0 * h))
                };
                let richardson = |h: f64| -> Option<f64> { Some((4.0 * central(h / 2.0)? - central(h)?) / 3.0) };
                let (Some(fd), Some(coarse)) = (richardson(1e-3), richardson(2e-3)) else { continue };
                let scale = 1.0 + exact.abs() + v.abs();
                prop_assert!((fd - exact).abs() <= 1e-7 * scale + 2.0 * (fd - coarse).abs(),
                    "{} at {}: fd {} vs {}", e, t0, fd, exact);
            }
        }
    }
}
