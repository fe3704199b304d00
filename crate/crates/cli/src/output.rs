//! Result files: CSV tables, the run metadata file, and checkpoints.

use std::path::{Path, PathBuf};

use psman_core::OptimizeReport;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const RUN_METADATA: &str = "run.toml";

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes `rows` as a headed CSV. Floats use the shortest representation
/// that round-trips, so identical inputs give identical bytes.
pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: Option<f64>,
}

pub fn trace_rows(report: &OptimizeReport) -> impl Iterator<Item = TraceRow> + '_ {
    report.loss_trace.iter().enumerate().map(|(i, &loss)| TraceRow {
        iteration: i,
        loss,
        grad_norm: report.grad_norm_trace.get(i).copied(),
    })
}

/// Accumulates the key-value metadata of one run.
#[derive(Debug, Default)]
pub struct Metadata {
    root: toml::Table,
    outputs: Vec<PathBuf>,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.root.insert(key.into(), value.into());
    }

    pub fn section(&mut self, name: &str, table: toml::Table) {
        self.root.insert(name.into(), toml::Value::Table(table));
    }

    pub fn report(&mut self, report: &OptimizeReport) {
        let mut t = toml::Table::new();
        t.insert("termination".into(), report.termination.to_string().into());
        t.insert("iterations".into(), (report.iterations as i64).into());
        t.insert("final_loss".into(), report.final_loss().into());
        t.insert("monotone".into(), report.is_monotone().into());
        self.section("result", t);
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn write(mut self, dir: &Path, wall_seconds: f64) -> CliResult<PathBuf> {
        let path = dir.join(RUN_METADATA);
        self.set("wall_time_seconds", wall_seconds);
        let outputs: Vec<toml::Value> = self.outputs.iter().map(|p| p.display().to_string().into()).collect();
        self.set("outputs", outputs);
        let text = toml::to_string(&self.root).map_err(|e| CliError::io(&path, e))?;
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        name: &'static str,
        value: f64,
    }

    #[test]
    fn csv_floats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let v = 0.1 + 0.2;
        write_csv(&path, [Row { name: "a", value: v }, Row { name: "b", value: 1.0 }]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("name,value"));
        let cell = lines.next().unwrap().split(',').nth(1).unwrap();
        assert_eq!(cell.parse::<f64>().unwrap(), v);
    }

    #[test]
    fn metadata_is_valid_toml() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Metadata::new("mdpca");
        m.set("seed", 3i64);
        m.output(Path::new("x.csv"));
        let path = m.write(dir.path(), 0.5).unwrap();
        let parsed: toml::Table = std::fs::read_to_string(path).unwrap().parse().unwrap();
        assert_eq!(parsed["command"].as_str(), Some("mdpca"));
        assert_eq!(parsed["seed"].as_integer(), Some(3));
        assert_eq!(parsed["outputs"].as_array().unwrap().len(), 1);
    }
}
