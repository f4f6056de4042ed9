//! CSV/JSON emission and the `<path>.meta.json` sidecar.

use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{Format, RunConfig};
use crate::error::CliError;

/// Numeric table with a header row.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Header plus one line per row; numbers use the shortest decimal text
    /// that reads back to the same `f64`.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_number(&mut out, *v);
            }
            out.push('\n');
        }
        out
    }
}

/// Shortest round-tripping text; scientific notation outside [1e-4, 1e15).
fn write_number(out: &mut String, v: f64) {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        let _ = write!(out, "{v}");
    } else {
        let _ = write!(out, "{v:e}");
    }
}

/// Result of one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: Table,
    pub summary: Value,
    /// Set when the run completed but failed its own check (exit 3).
    pub failure: Option<String>,
}

impl Outcome {
    pub fn new(table: Table, summary: Value) -> Self {
        Self { table, summary, failure: None }
    }
}

pub fn render(command: &str, outcome: &Outcome, format: Format) -> String {
    match format {
        Format::Csv => outcome.table.to_csv(),
        Format::Json => {
            let doc = json!({
                "command": command,
                "summary": outcome.summary,
                "columns": outcome.table.columns,
                "rows": outcome.table.rows,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("json");
            s.push('\n');
            s
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes the rendered output and its sidecar.
pub fn write_outputs(
    path: &Path,
    command: &str,
    config: &RunConfig,
    outcome: &Outcome,
    elapsed_seconds: f64,
) -> Result<(), CliError> {
    let body = render(command, outcome, config.output.format);
    let meta = json!({
        "command": command,
        "config": config,
        "constants_version": superhet::constants::CONSTANTS_VERSION,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "seed": config.task.seed,
        "elapsed_seconds": elapsed_seconds,
        "summary": outcome.summary,
        "failure": outcome.failure,
    });
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, body)?;
    let mut text = serde_json::to_string_pretty(&meta).expect("json");
    text.push('\n');
    std::fs::write(sidecar_path(path), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_floats() {
        let mut t = Table::new(&["a", "b"]);
        let vals = [0.1 + 0.2, 1e-300, -2.5e17, 1.0 / 3.0];
        assert!(!Table { columns: vec!["x".into()], rows: vec![vec![1e-300]] }.to_csv().contains("0000"));
        t.push(vec![vals[0], vals[1]]);
        t.push(vec![vals[2], vals[3]]);
        let csv = t.to_csv();
        let back: Vec<f64> = csv
            .lines()
            .skip(1)
            .flat_map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>())
            .collect();
        assert_eq!(back, vals);
        assert!(csv.starts_with("a,b\n"));
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar_path(Path::new("out/curve.csv")), PathBuf::from("out/curve.csv.meta.json"));
    }
}
