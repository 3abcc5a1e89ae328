//! CSV and JSON artifacts. Every file carries the reproducibility stamp;
//! nothing time-dependent is written.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::config::Config;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
    pub version: &'static str,
}

impl Stamp {
    pub fn of(cfg: &Config) -> Stamp {
        Stamp { config_hash: cfg.hash(), seed: cfg.mc.seed, version: env!("CARGO_PKG_VERSION") }
    }

    fn comment(&self) -> String {
        format!("# config_hash={} seed={} version={}", self.config_hash, self.seed, self.version)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Floats with 17 significant digits, so values round-trip bit-exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// One CSV file's worth of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Table {
        Table { name: name.to_string(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn render(&self, stamp: &Stamp) -> String {
        let mut out = String::new();
        writeln!(out, "{}", stamp.comment()).unwrap();
        writeln!(out, "{}", self.header.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub results: serde_json::Value,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    stamp: &'a Stamp,
    experiment: &'static str,
    passed: bool,
    config: &'a Config,
    results: &'a serde_json::Value,
}

/// Renders `summary.json`.
pub fn render_summary(cfg: &Config, outcome: &Outcome) -> String {
    let stamp = Stamp::of(cfg);
    let summary = Summary {
        stamp: &stamp,
        experiment: cfg.experiment.name(),
        passed: outcome.passed,
        config: cfg,
        results: &outcome.results,
    };
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    s
}

/// Writes `summary.json` and one `<name>.csv` per table into `dir`.
pub fn write_outcome(dir: &Path, cfg: &Config, outcome: &Outcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let stamp = Stamp::of(cfg);
    std::fs::write(dir.join("summary.json"), render_summary(cfg, outcome))?;
    for t in &outcome.tables {
        std::fs::write(dir.join(format!("{}.csv", t.name)), t.render(&stamp))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_carries_stamp() {
        let cfg = Config::default_for(Experiment::WickCheck);
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec![1usize.into(), 0.5.into()]);
        let s = t.render(&Stamp::of(&cfg));
        let mut lines = s.lines();
        assert!(lines.next().unwrap().contains(&cfg.hash()));
        assert_eq!(lines.next().unwrap(), "a,b");
        assert_eq!(lines.next().unwrap(), "1,5.0000000000000000e-1");
    }
}
