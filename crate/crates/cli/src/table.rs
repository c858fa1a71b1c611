//! Rectangular report tables with CSV and JSON renderings.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use pfs_core::ingest::fmt_real;

use crate::config::Format;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn real(x: f64) -> String {
    fmt_real(x)
}

pub fn opt_real(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).map_err(pfs_core::Error::from)?;
        for r in &self.rows {
            w.write_record(r).map_err(pfs_core::Error::from)?;
        }
        Ok(w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?)
    }

    /// Cells that parse as numbers become JSON numbers, empty cells null.
    pub fn json_value(&self) -> Value {
        let cell = |s: &String| -> Value {
            if s.is_empty() {
                Value::Null
            } else if let Ok(i) = s.parse::<i64>() {
                json!(i)
            } else if let Some(n) = s.parse::<f64>().ok().and_then(serde_json::Number::from_f64) {
                Value::Number(n)
            } else {
                Value::String(s.clone())
            }
        };
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(cell).collect())).collect();
        json!({ "name": self.name, "columns": self.columns, "rows": rows })
    }

    /// Write `<dir>/<name>.<ext>` and return the path.
    pub fn write(&self, dir: &Path, format: Format) -> Result<PathBuf> {
        let path = dir.join(format!("{}.{}", self.name, format.extension()));
        let bytes = match format {
            Format::Csv => self.csv_bytes()?,
            Format::Json => {
                let mut b = serde_json::to_vec_pretty(&self.json_value())?;
                b.push(b'\n');
                b
            }
        };
        std::fs::write(&path, bytes)?;
        Ok(path)
    }

    pub fn read_csv(name: &str, path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(pfs_core::Error::from)?;
        let columns = rdr.headers().map_err(pfs_core::Error::from)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec.map_err(pfs_core::Error::from)?.iter().map(String::from).collect());
        }
        Ok(Self { name: name.into(), columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}
