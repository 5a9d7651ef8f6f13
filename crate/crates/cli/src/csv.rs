//! CSV output: header row, '.' decimals, 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

/// `{:.16e}` keeps 17 significant digits, enough to round-trip any double.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        // Avoid "-0".
        return "0".into();
    }
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.16e}")
}

pub struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Table { w }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        let parts = cells.into_iter().map(|c| match c {
            Cell::Num(v) => num(v),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s,
            Cell::Empty => String::new(),
        });
        self.w.write_record(parts).expect("in-memory write");
    }

    pub fn write(self, path: &Path) -> std::io::Result<()> {
        let bytes = self.w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        std::fs::write(path, bytes)
    }
}

/// One value per line.
pub fn write_column<T: std::fmt::Display>(path: &Path, xs: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    let mut s = String::new();
    for x in xs {
        let _ = writeln!(s, "{x}");
    }
    std::fs::write(path, s)
}

pub fn write_floats(path: &Path, xs: &[f64]) -> std::io::Result<()> {
    write_column(path, xs.iter().map(|&x| num(x)))
}
