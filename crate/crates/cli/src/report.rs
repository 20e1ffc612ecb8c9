//! Command results and their table, CSV and JSON renderings.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::spec::{Format, RunSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Cell {
    /// 17 significant digits, enough to round-trip an `f64`.
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
        }
    }

    fn human(&self) -> String {
        match self {
            Cell::Float(v) => format!("{v:.6e}"),
            other => other.csv(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) => json!(v),
            Cell::Bool(v) => json!(v),
            Cell::Text(v) => json!(v),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn json_rows(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> =
                        self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

/// Output of one command. `ok` drives the exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub ok: bool,
    pub table: Table,
    /// Summary lines for people; CSV sends them to stderr.
    pub notes: Vec<String>,
    /// Extra JSON fields next to `rows`.
    pub extra: Map<String, Value>,
}

impl Report {
    pub fn new(table: Table) -> Self {
        Report {
            ok: true,
            table,
            notes: Vec::new(),
            extra: Map::new(),
        }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn attach<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.extra.insert(key.to_string(), v);
    }

    pub fn to_json(&self, spec: &RunSpec) -> Value {
        let mut results = self.extra.clone();
        results.insert("ok".into(), json!(self.ok));
        results.insert("rows".into(), self.table.json_rows());
        json!({
            "schema_version": SCHEMA_VERSION,
            "spec": spec,
            "results": Value::Object(results),
        })
    }

    pub fn write_csv(&self, out: impl Write) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.table.columns)?;
        for row in &self.table.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        w.flush()
    }

    pub fn write_table(&self, mut out: impl Write) -> io::Result<()> {
        if !self.table.columns.is_empty() {
            let cells: Vec<Vec<String>> = self
                .table
                .rows
                .iter()
                .map(|r| r.iter().map(Cell::human).collect())
                .collect();
            let widths: Vec<usize> = self
                .table
                .columns
                .iter()
                .enumerate()
                .map(|(k, c)| cells.iter().map(|r| r[k].len()).chain([c.len()]).max().unwrap_or(0))
                .collect();
            let line = |items: &[String]| -> String {
                items
                    .iter()
                    .zip(&widths)
                    .map(|(s, w)| format!("{s:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            writeln!(out, "{}", line(&self.table.columns))?;
            for row in &cells {
                writeln!(out, "{}", line(row))?;
            }
        }
        for note in &self.notes {
            writeln!(out, "{note}")?;
        }
        Ok(())
    }

    /// Writes the report in `spec.format`. Notes go to `notes` for CSV.
    pub fn render(&self, spec: &RunSpec, mut out: impl Write, mut notes: impl Write) -> io::Result<()> {
        match spec.format {
            Format::Table => self.write_table(out),
            Format::Csv => {
                self.write_csv(&mut out)?;
                for note in &self.notes {
                    writeln!(notes, "{note}")?;
                }
                Ok(())
            }
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, &self.to_json(spec))?;
                writeln!(out)
            }
        }
    }
}
