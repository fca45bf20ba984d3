//! Task reports: a CSV table with a definition row under the header, and a
//! JSON summary embedding the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

/// `re+imi` with shortest round-trip decimals.
pub fn complex_string(z: Complex64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

pub fn complex_json(z: Complex64) -> Value {
    Value::String(complex_string(z))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub definition: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[(&str, &str)]) -> Self {
        Table {
            columns: columns
                .iter()
                .map(|(n, d)| Column {
                    name: n.to_string(),
                    definition: d.to_string(),
                })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(self.columns.iter().map(|c| &c.name))
            .map_err(io)?;
        w.write_record(self.columns.iter().map(|c| &c.definition))
            .map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
}

impl Assertion {
    pub fn new(name: impl Into<String>, value: f64, relation: Relation, threshold: f64) -> Self {
        let passed = match relation {
            Relation::Lt => value < threshold,
            Relation::Le => value <= threshold,
            Relation::Eq => value == threshold,
            Relation::Gt => value > threshold,
            Relation::Ge => value >= threshold,
        };
        Assertion {
            name: name.into(),
            value,
            relation,
            threshold,
            passed,
        }
    }

    /// A yes/no check recorded as `value == 1`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Relation::Eq, 1.0)
    }

    pub fn describe(&self) -> String {
        let rel = match self.relation {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Eq => "==",
            Relation::Gt => ">",
            Relation::Ge => ">=",
        };
        format!("{}: {:e} {rel} {:e}", self.name, self.value, self.threshold)
    }
}

#[derive(Debug, Clone)]
pub struct TaskReport {
    pub task: String,
    pub table: Table,
    pub assertions: Vec<Assertion>,
    pub results: Value,
}

impl TaskReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    /// Pretty JSON with sorted object keys.
    pub fn to_json(&self, config: &RunConfig) -> Result<String, CliError> {
        let config = serde_json::to_value(config).map_err(|e| CliError::Io(e.to_string()))?;
        let columns =
            serde_json::to_value(&self.table.columns).map_err(|e| CliError::Io(e.to_string()))?;
        let summary = json!({
            "task": self.task,
            "passed": self.passed(),
            "config": config,
            "columns": columns,
            "assertions": self.assertions,
            "results": self.results,
        });
        let mut s =
            serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `<task>.csv` and `<task>.json` into `dir`.
    pub fn write(&self, config: &RunConfig, dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        let csv_path = dir.join(format!("{}.csv", self.task));
        let json_path = dir.join(format!("{}.json", self.task));
        fs::write(&csv_path, self.table.to_csv()?).map_err(io)?;
        fs::write(&json_path, self.to_json(config)?).map_err(io)?;
        Ok((csv_path, json_path))
    }
}
