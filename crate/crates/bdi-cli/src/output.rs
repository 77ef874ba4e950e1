//! CSV and JSON emission. Floats are written with 17 significant digits so
//! every emitted value reloads bit-for-bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvWriter {
    buffer: String,
    columns: usize,
}

impl CsvWriter {
    pub fn new(header: &[&str]) -> Self {
        let mut buffer = String::new();
        buffer.push_str(&header.join(","));
        buffer.push('\n');
        Self {
            buffer,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[CsvCell]) {
        assert_eq!(cells.len(), self.columns, "row width mismatch");
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                self.buffer.push(',');
            }
            match cell {
                CsvCell::Float(v) => self.buffer.push_str(&fmt_f64(*v)),
                CsvCell::Int(v) => {
                    let _ = write!(self.buffer, "{v}");
                }
            }
        }
        self.buffer.push('\n');
    }

    pub fn save(self, path: &Path) -> Result<()> {
        fs::write(path, self.buffer.as_bytes())
            .with_context(|| format!("cannot write {}", path.display()))
    }
}

pub enum CsvCell {
    Float(f64),
    Int(i64),
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text.as_bytes()).with_context(|| format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for &v in &[
            0.3,
            1.0 / 3.0,
            6.38905609893065,
            1e-300,
            2.3e17,
            -0.000123456789012345,
        ] {
            let back: f64 = fmt_f64(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} round-trips");
        }
    }
}
