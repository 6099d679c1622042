//! Line-oriented problem files.
//!
//! ```text
//! # comment
//! m = 2
//! interval = 0 1
//! param rho = 1.5
//! E[1][1] = -t          # 1-based, omitted entries are 0
//! F[2][2] = rho*cos(t)
//! q[1] = exp(t)         # optional right-hand side
//! ```
//!
//! Entry text is kept verbatim so reports can echo it unchanged.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::expr::{parse, Expr, ExprMatrix, Params};
use crate::reduction::CoefficientPair;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ProblemError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// Zero-based position; `j = 0` for right-hand side entries.
    pub i: usize,
    pub j: usize,
    pub text: String,
    pub expr: Expr,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub m: usize,
    pub interval: (f64, f64),
    pub params: Vec<(String, f64)>,
    pub e: Vec<Entry>,
    pub f: Vec<Entry>,
    pub q: Vec<Entry>,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> ProblemError {
    ProblemError {
        line,
        column,
        message: message.into(),
    }
}

fn parse_real(s: &str, line: usize, column: usize) -> Result<f64, ProblemError> {
    let x: f64 = s
        .parse()
        .map_err(|_| err(line, column, format!("expected a real number, found `{s}`")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(err(line, column, format!("`{s}` is not finite")))
    }
}

/// Parses `[i]` or `[i][j]` after a matrix name; returns 1-based indices.
fn parse_indices(s: &str, n: usize, line: usize, column: usize) -> Result<Vec<usize>, ProblemError> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    for _ in 0..n {
        let inner = rest
            .strip_prefix('[')
            .and_then(|r| r.split_once(']'))
            .ok_or_else(|| err(line, column, format!("expected {n} bracketed index(es) in `{s}`")))?;
        let k: usize = inner
            .0
            .trim()
            .parse()
            .map_err(|_| err(line, column, format!("invalid index `{}`", inner.0.trim())))?;
        if k == 0 {
            return Err(err(line, column, "indices are 1-based"));
        }
        out.push(k);
        rest = inner.1.trim_start();
    }
    if !rest.is_empty() {
        return Err(err(line, column, format!("unexpected `{rest}` after indices")));
    }
    Ok(out)
}

pub fn parse_problem(text: &str) -> Result<Problem, ProblemError> {
    let mut m = None;
    let mut interval = None;
    let mut params: Vec<(String, f64)> = Vec::new();
    let (mut e, mut f, mut q) = (Vec::new(), Vec::new(), Vec::new());
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, 1, "expected `key = value`"))?;
        let value_col = key.len() + 2 + (value.len() - value.trim_start().len());
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(err(line, value_col, "missing value"));
        }
        match key {
            "m" => {
                let v: usize = value
                    .parse()
                    .map_err(|_| err(line, value_col, format!("expected a positive integer, found `{value}`")))?;
                if v == 0 {
                    return Err(err(line, value_col, "m must be positive"));
                }
                if m.replace(v).is_some() {
                    return Err(err(line, 1, "duplicate `m`"));
                }
            }
            "interval" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(err(line, value_col, "expected `interval = <t0> <t1>`"));
                }
                let t0 = parse_real(parts[0], line, value_col)?;
                let t1 = parse_real(parts[1], line, value_col)?;
                if t0 >= t1 {
                    return Err(err(line, value_col, "interval must satisfy t0 < t1"));
                }
                if interval.replace((t0, t1)).is_some() {
                    return Err(err(line, 1, "duplicate `interval`"));
                }
            }
            _ if key.starts_with("param ") || key.starts_with("param\t") => {
                let name = key[5..].trim();
                let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                    && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                    && !matches!(name, "t" | "sin" | "cos" | "exp");
                if !valid {
                    return Err(err(line, 7, format!("invalid parameter name `{name}`")));
                }
                if params.iter().any(|(p, _)| p == name) {
                    return Err(err(line, 7, format!("duplicate parameter `{name}`")));
                }
                params.push((name.to_string(), parse_real(value, line, value_col)?));
            }
            _ => {
                let (target, n_idx) = match key.chars().next() {
                    Some('E') => (&mut e, 2),
                    Some('F') => (&mut f, 2),
                    Some('q') => (&mut q, 1),
                    _ => return Err(err(line, 1, format!("unknown key `{key}`"))),
                };
                let idx = parse_indices(&key[1..], n_idx, line, 2)?;
                let (i, j) = (idx[0] - 1, idx.get(1).map_or(0, |j| j - 1));
                if target.iter().any(|x: &Entry| x.i == i && x.j == j) {
                    return Err(err(line, 1, format!("duplicate entry `{key}`")));
                }
                let expr = parse(value).map_err(|pe| err(line, value_col + pe.offset, pe.to_string()))?;
                target.push(Entry {
                    i,
                    j,
                    text: value.to_string(),
                    expr,
                    line,
                });
            }
        }
    }
    let m = m.ok_or_else(|| err(0, 0, "missing `m = <int>`"))?;
    let interval = interval.ok_or_else(|| err(0, 0, "missing `interval = <t0> <t1>`"))?;
    for (name, entries, cols) in [("E", &e, m), ("F", &f, m), ("q", &q, 1)] {
        if let Some(x) = entries.iter().find(|x| x.i >= m || x.j >= cols) {
            return Err(err(x.line, 1, format!("{name} index out of range for m = {m}")));
        }
    }
    for x in e.iter().chain(&f).chain(&q) {
        if let Some(p) = x
            .expr
            .parameters()
            .into_iter()
            .find(|p| !params.iter().any(|(n, _)| n == p))
        {
            return Err(err(x.line, 1, format!("unbound parameter `{p}`")));
        }
    }
    Ok(Problem {
        m,
        interval,
        params,
        e,
        f,
        q,
    })
}

impl Problem {
    fn matrix(entries: &[Entry], rows: usize, cols: usize) -> ExprMatrix {
        let mut out = ExprMatrix::zeros(rows, cols);
        for x in entries {
            out.set(x.i, x.j, x.expr.clone());
        }
        out
    }

    pub fn params(&self) -> Params {
        self.params.iter().cloned().collect()
    }

    pub fn e_matrix(&self) -> ExprMatrix {
        Self::matrix(&self.e, self.m, self.m)
    }

    pub fn f_matrix(&self) -> ExprMatrix {
        Self::matrix(&self.f, self.m, self.m)
    }

    /// The right-hand side as an `m × 1` matrix, `None` when homogeneous.
    pub fn q_matrix(&self) -> Option<ExprMatrix> {
        (!self.q.is_empty()).then(|| Self::matrix(&self.q, self.m, 1))
    }

    pub fn pair(&self) -> crate::Result<CoefficientPair> {
        CoefficientPair::new(self.e_matrix(), self.f_matrix(), self.interval, self.params())
    }

    /// Builds a problem from expression matrices, printing every nonzero entry.
    pub fn from_pair(pair: &CoefficientPair, q: Option<&ExprMatrix>) -> Self {
        let entries = |mat: &ExprMatrix| -> Vec<Entry> {
            mat.entries()
                .filter(|(_, _, x)| !x.is_zero())
                .map(|(i, j, x)| Entry {
                    i,
                    j,
                    text: x.to_string(),
                    expr: x.clone(),
                    line: 0,
                })
                .collect()
        };
        Self {
            m: pair.m(),
            interval: pair.interval,
            params: pair.params.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            e: entries(&pair.e),
            f: entries(&pair.f),
            q: q.map(entries).unwrap_or_default(),
        }
    }

    pub fn to_text(&self, title: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(title) = title {
            let _ = writeln!(s, "# {title}");
        }
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "interval = {} {}", self.interval.0, self.interval.1);
        for (k, v) in &self.params {
            let _ = writeln!(s, "param {k} = {v}");
        }
        for x in &self.e {
            let _ = writeln!(s, "E[{}][{}] = {}", x.i + 1, x.j + 1, x.text);
        }
        for x in &self.f {
            let _ = writeln!(s, "F[{}][{}] = {}", x.i + 1, x.j + 1, x.text);
        }
        for x in &self.q {
            let _ = writeln!(s, "q[{}] = {}", x.i + 1, x.text);
        }
        s
    }
}
