//! Tabular results and their CSV / JSON renderings.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;

/// A named table of rows with a fixed column list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; panics on a column-count mismatch.
    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width for table {}",
            self.name
        );
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Everything one invocation produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub command: String,
    /// The configuration with the seed actually used filled in.
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub wall_clock_secs: f64,
    pub tables: Vec<Table>,
    pub summary: Value,
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:e}"),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

impl RunReport {
    /// `#` metadata lines, then each table introduced by `# table: name`.
    pub fn write_csv<W: Write>(&self, out: W) -> anyhow::Result<()> {
        let mut out = out;
        writeln!(out, "# version: {}", self.version)?;
        writeln!(out, "# command: {}", self.command)?;
        writeln!(out, "# seed: {}", self.seed)?;
        writeln!(out, "# config_sha256: {}", self.config_sha256)?;
        writeln!(out, "# wall_clock_secs: {:.3}", self.wall_clock_secs)?;
        for table in &self.tables {
            writeln!(out, "# table: {}", table.name)?;
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&table.columns)?;
            for row in &table.rows {
                w.write_record(row.iter().map(cell))?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> anyhow::Result<()> {
        let mut out = out;
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}
