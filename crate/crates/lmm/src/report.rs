//! Deterministic CSV tables.
//!
//! Every file starts with a `# lmm <version> config_hash=<hex>` line, then a
//! column header row and the data rows. Numbers are written in Rust's
//! shortest round-trip form so identical inputs give identical bytes.

use std::fs;
use std::path::Path;

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of column `name` parsed as numbers.
    pub fn numbers(&self, name: &str) -> CliResult<Vec<f64>> {
        let k = self.column(name).ok_or_else(|| CliError::Validation(format!("no column {name}")))?;
        self.rows
            .iter()
            .map(|r| r[k].parse::<f64>().map_err(|e| CliError::Validation(format!("column {name}: {e}"))))
            .collect()
    }

    /// Sorts rows by the given columns, left to right, comparing numbers
    /// numerically when both cells parse.
    pub fn sort_by_columns(&mut self, keys: &[&str]) {
        let idx: Vec<usize> = keys.iter().filter_map(|k| self.column(k)).collect();
        self.rows.sort_by(|a, b| {
            for &k in &idx {
                let o = match (a[k].parse::<f64>(), b[k].parse::<f64>()) {
                    (Ok(x), Ok(y)) => x.total_cmp(&y),
                    _ => a[k].cmp(&b[k]),
                };
                if o.is_ne() {
                    return o;
                }
            }
            std::cmp::Ordering::Equal
        });
    }

    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells");
        format!("# lmm {VERSION} config_hash={config_hash}\n{body}")
    }

    pub fn write(&self, path: &Path, config_hash: &str) -> CliResult<()> {
        fs::write(path, self.to_csv(config_hash)).map_err(|e| CliError::io(path, e))
    }

    /// Parses a file written by [`Table::write`]; returns the config hash too.
    pub fn read(path: &Path) -> CliResult<(String, Table)> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let bad = |reason: String| CliError::BadFile { path: path.to_path_buf(), reason };
        let (first, rest) = text.split_once('\n').ok_or_else(|| bad("empty file".into()))?;
        let hash = first
            .split_once("config_hash=")
            .map(|(_, h)| h.trim().to_string())
            .filter(|_| first.starts_with("# lmm "))
            .ok_or_else(|| bad("missing `# lmm` header line".into()))?;
        let mut r = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
        let columns = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
        let mut table = Table { columns, rows: Vec::new() };
        for rec in r.records() {
            table.rows.push(rec.map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect());
        }
        Ok((hash, table))
    }
}

/// Formats a number for a CSV cell.
pub fn num(x: f64) -> String {
    format!("{x}")
}
