use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::model::CMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(format_cell).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn format_cell(c: &Cell) -> String {
    match c {
        Cell::Num(v) if v.is_nan() => "nan".into(),
        Cell::Num(v) if v.is_infinite() => if *v > 0.0 { "inf" } else { "-inf" }.into(),
        Cell::Num(v) => format!("{:.16e}", v + 0.0),
        Cell::Int(v) => v.to_string(),
        Cell::Text(s) => s.clone(),
    }
}

/// JSON number, or `null` when not finite.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn complex(z: Complex64) -> Value {
    Value::Array(vec![num(z.re), num(z.im)])
}

pub fn cmatrix(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| Value::Array((0..m.ncols()).map(|c| complex(m[(r, c)])).collect()))
            .collect(),
    )
}

pub fn numbers(v: &[f64]) -> Value {
    Value::Array(v.iter().copied().map(num).collect())
}

pub fn to_json_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values are serializable");
    s.push('\n');
    s
}

pub struct Artifacts {
    pub trace: Option<String>,
    pub result: Option<String>,
    pub summary: Option<String>,
}

pub fn write_all(dir: &Path, a: &Artifacts) -> io::Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut written = vec![];
    for (name, body) in [
        ("trace.csv", &a.trace),
        ("result.json", &a.result),
        ("summary.txt", &a.summary),
    ] {
        if let Some(body) = body {
            let path = dir.join(name);
            fs::write(&path, body)?;
            written.push(path.display().to_string());
        }
    }
    Ok(written)
}

/// Appends `key: value` lines, right-aligning the keys.
pub fn summary_lines(pairs: &[(&str, String)]) -> String {
    let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{k:>width$}  {v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_seventeen_digits() {
        let mut t = Table::new(["a", "b", "c"]);
        t.push(vec![0.1.into(), 3usize.into(), "x".into()]);
        assert_eq!(t.to_csv(), "a,b,c\n1.0000000000000001e-1,3,x\n");
        let back: f64 = "1.0000000000000001e-1".parse().unwrap();
        assert_eq!(back, 0.1);
    }

    #[test]
    fn json_round_trips() {
        let v = json!({"x": num(0.1 + 0.2), "m": complex(Complex64::new(-1e-300, 1.0 / 3.0)), "n": num(f64::NAN)});
        let s = to_json_string(&v);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(to_json_string(&back), s);
    }
}
