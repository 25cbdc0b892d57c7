//! Tables, reports and their CSV/JSON encodings.
//!
//! CSV: one table per file. The primary table goes to `--out` (or stdout);
//! further tables and the report go next to it as `<stem>.<name>.csv`.
//! JSON: a single document holding the config echo, report and all tables.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};

pub const SCHEMA: &str = "tko-output/1";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    List(Vec<f64>),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
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

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Vec<f64>> for Cell {
    fn from(v: Vec<f64>) -> Self {
        Cell::List(v)
    }
}

fn num_csv(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (v.is_finite() && (1e-4..1e15).contains(&a)) {
        format!("{v}")
    } else if v.is_finite() {
        format!("{v:e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn num_json(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => num_csv(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(b) => u8::from(*b).to_string(),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
            Cell::List(v) => v.iter().map(|x| num_csv(*x)).collect::<Vec<_>>().join(";"),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => num_json(*v),
            Cell::Int(v) => json!(v),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
            Cell::List(v) => Value::Array(v.iter().map(|x| num_json(*x)).collect()),
            Cell::Missing => Value::Null,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    /// Column names carry their units, e.g. `omega_rad_per_s`.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(Cell::csv).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect::<Vec<_>>(),
        })
    }
}

/// Everything a subcommand produces.
#[derive(Debug, Clone)]
pub struct Output {
    pub command: &'static str,
    pub config: Value,
    pub tables: Vec<Table>,
    pub report: Vec<(String, Cell)>,
}

impl Output {
    pub fn new(command: &'static str, config: Value) -> Self {
        Self { command, config, tables: Vec::new(), report: Vec::new() }
    }

    pub fn report(&mut self, key: &str, value: impl Into<Cell>) {
        self.report.push((key.to_string(), value.into()));
    }

    fn report_table(&self) -> Table {
        let mut t = Table::new("report", &["quantity", "value"]);
        for (k, v) in &self.report {
            t.push(vec![Cell::Text(k.clone()), v.clone()]);
        }
        t
    }

    pub fn to_json(&self) -> String {
        let mut report = Map::new();
        for (k, v) in &self.report {
            report.insert(k.clone(), v.json());
        }
        let doc = json!({
            "schema": SCHEMA,
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "report": Value::Object(report),
            "tables": self.tables.iter().map(Table::to_json).collect::<Vec<_>>(),
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("JSON encoding of plain values");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Writes via a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}.{name}.csv"))
}

/// Emits `out` in `format`; returns the files written.
pub fn emit(out: &Output, format: Format, path: Option<&Path>) -> Result<Vec<PathBuf>> {
    match (format, path) {
        (Format::Json, Some(p)) => {
            write_atomic(p, &out.to_json())?;
            Ok(vec![p.to_path_buf()])
        }
        (Format::Json, None) => {
            print!("{}", out.to_json());
            Ok(Vec::new())
        }
        (Format::Csv, None) => {
            let primary = out.tables.first().cloned().unwrap_or_else(|| out.report_table());
            print!("{}", primary.to_csv());
            Ok(Vec::new())
        }
        (Format::Csv, Some(p)) => {
            let mut written = Vec::new();
            let mut tables = out.tables.clone();
            tables.push(out.report_table());
            for (i, t) in tables.iter().enumerate() {
                let target = if i == 0 { p.to_path_buf() } else { sibling(p, &t.name) };
                write_atomic(&target, &t.to_csv())?;
                written.push(target);
            }
            Ok(written)
        }
    }
}
