//! Reports with a human layout and the line-oriented machine form
//! `daecan-report v1` (see `docs/report-schema.md`).

use std::fmt::Write;

use daecan_core::Matrix;

#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Real(f64),
    /// Free text, quoted in the machine form.
    Text(String),
    /// A bare token such as a verdict name.
    Word(String),
    Ints(Vec<usize>),
    Reals(Vec<f64>),
    Matrix(Matrix),
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<Vec<usize>> for Value {
    fn from(v: Vec<usize>) -> Self {
        Value::Ints(v)
    }
}

impl From<Vec<f64>> for Value {
    fn from(v: Vec<f64>) -> Self {
        Value::Reals(v)
    }
}

impl From<Matrix> for Value {
    fn from(v: Matrix) -> Self {
        Value::Matrix(v)
    }
}

impl From<&Matrix> for Value {
    fn from(v: &Matrix) -> Self {
        Value::Matrix(v.clone())
    }
}

pub fn text(s: impl Into<String>) -> Value {
    Value::Text(s.into())
}

pub fn word(s: impl Into<String>) -> Value {
    Value::Word(s.into())
}

/// Shortest round-trip representation in exponent form.
fn real(x: f64) -> String {
    if x == 0.0 {
        "0e0".into()
    } else if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:e}")
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn join<T>(items: impl IntoIterator<Item = T>, f: impl Fn(T) -> String) -> String {
    items.into_iter().map(f).collect::<Vec<_>>().join(", ")
}

/// Seven significant digits, trailing zeros trimmed.
fn human_real(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { real(x) };
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-3..6).contains(&magnitude) {
        return format!("{x:.3e}");
    }
    let s = format!("{:.*}", (6 - magnitude) as usize, x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

impl Value {
    fn machine(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Real(v) => real(*v),
            Value::Text(s) => quote(s),
            Value::Word(s) => s.clone(),
            Value::Ints(v) => format!("[{}]", join(v, |x| x.to_string())),
            Value::Reals(v) => format!("[{}]", join(v, |x| real(*x))),
            Value::Matrix(m) => {
                let entries = join(
                    (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))),
                    |(i, j)| real(m[(i, j)]),
                );
                format!("matrix {} {} [{entries}]", m.nrows(), m.ncols())
            }
        }
    }

    fn human(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Real(v) => human_real(*v),
            Value::Text(s) | Value::Word(s) => s.clone(),
            Value::Ints(v) => format!("({})", join(v, |x| x.to_string())),
            Value::Reals(v) => format!("({})", join(v, |x| human_real(*x))),
            Value::Matrix(m) => {
                if m.nrows() == 0 || m.ncols() == 0 {
                    return format!("{}×{} (empty)", m.nrows(), m.ncols());
                }
                let mut s = format!("{}×{}", m.nrows(), m.ncols());
                for i in 0..m.nrows() {
                    s.push_str("\n      ");
                    for j in 0..m.ncols() {
                        let _ = write!(s, "{:>12.4e}", m[(i, j)]);
                    }
                }
                s
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    entries: Vec<(String, Value)>,
}

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        self.entries.push((key.into(), value.into()));
    }

    pub fn machine(&self) -> String {
        let mut s = String::from("daecan-report v1\n");
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {}", v.machine());
        }
        s.push_str("end\n");
        s
    }

    /// Groups entries by the first key segment.
    pub fn human(&self) -> String {
        let mut s = String::new();
        let mut section = "";
        for (k, v) in &self.entries {
            let (head, rest) = k.split_once('.').unwrap_or((k.as_str(), ""));
            if head != section {
                section = head;
                let _ = writeln!(s, "{}{head}", if s.is_empty() { "" } else { "\n" });
            }
            let label = if rest.is_empty() { head } else { rest };
            let _ = writeln!(s, "  {label}: {}", v.human());
        }
        s
    }
}
