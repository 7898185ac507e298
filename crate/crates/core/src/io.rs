//! CSV interchange with a one-line JSON metadata header.
//!
//! Layout:
//! ```text
//! # {"omega":...,"seed":...}
//! t_s,p_s,stderr
//! 0,1,0
//! ```
//! Floats are written with Rust's shortest round-trip formatting, so
//! identical inputs produce identical bytes.

use serde_json::Value;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub meta: Option<Value>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            meta: None,
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_meta(mut self, meta: Value) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(meta) = &self.meta {
            let _ = writeln!(out, "# {}", serde_json::to_string(meta).unwrap());
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = None;
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if meta.is_none() && columns.is_none() {
                    meta = serde_json::from_str(rest.trim()).ok();
                }
                continue;
            }
            match &columns {
                None => {
                    columns = Some(line.split(',').map(|s| s.trim().to_string()).collect());
                }
                Some(cols) => {
                    let row = line
                        .split(',')
                        .map(|s| {
                            s.trim().parse::<f64>().map_err(|e| {
                                Error::Parse(format!("line {}: {e} in {s:?}", lineno + 1))
                            })
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    if row.len() != cols.len() {
                        return Err(Error::Parse(format!(
                            "line {}: expected {} columns, got {}",
                            lineno + 1,
                            cols.len(),
                            row.len()
                        )));
                    }
                    rows.push(row);
                }
            }
        }
        Ok(Self {
            meta,
            columns: columns.ok_or_else(|| Error::Parse("missing header row".into()))?,
            rows,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

pub fn format_f64(v: f64) -> String {
    if v == 0.0 {
        // normalizes -0
        "0".to_string()
    } else {
        format!("{v}")
    }
}
