//! Output directories for single runs and parameter sweeps.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;
use toml::{Table, Value};

use crate::attacks::{run_scenario, AttackError};
use crate::config::{ConfigError, ScenarioConfig};
use crate::report::AttackReport;
use crate::sim::TraceRecorder;

pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("scenario rejected: {0}")]
    Rejected(AttackError),
    #[error("simulation failed: {0}")]
    Internal(AttackError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    /// Problems with the input rather than with the tool.
    pub fn is_config(&self) -> bool {
        matches!(self, RunError::Config(_) | RunError::Rejected(_))
    }
}

impl From<AttackError> for RunError {
    fn from(e: AttackError) -> Self {
        match e {
            AttackError::Param { .. } | AttackError::WrongCore { .. } => RunError::Rejected(e),
            _ => RunError::Internal(e),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Runs one scenario and writes `trace.csv`, `report.json` and one
/// directory per crash log into `dir`.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path) -> Result<AttackReport, RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut trace = TraceRecorder::new();
    let out = run_scenario(&cfg.scenario, &mut trace)?;
    let trace_path = dir.join(TRACE_FILE);
    let file = fs::File::create(&trace_path).map_err(io_err(&trace_path))?;
    trace.write_csv(io::BufWriter::new(file)).map_err(|e| RunError::Io {
        path: trace_path.clone(),
        source: e.into(),
    })?;

    let mut report = out.report;
    report.trace_path = Some(TRACE_FILE.into());
    for (i, log) in out.crash_logs.iter().enumerate() {
        let d = log.export(dir, i).map_err(io_err(dir))?;
        report
            .crash_logs
            .push(d.file_name().expect("named dir").to_string_lossy().into_owned());
    }
    let report_path = dir.join(REPORT_FILE);
    fs::write(&report_path, report.to_json()).map_err(io_err(&report_path))?;
    debug!("{}: {} {}", dir.display(), report.verdict.as_str(), report.outcome);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// Dotted key in the scenario document, e.g. `attack.params.mode`.
    pub path: String,
    pub values: Vec<Value>,
}

/// Axes of a sweep; the cells are their cartesian product.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrix {
    #[serde(default, rename = "axis")]
    pub axes: Vec<Axis>,
}

impl Matrix {
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let table = ScenarioConfig::parse_table(src)?;
        let m = Matrix::deserialize(Value::Table(table)).map_err(|e| ConfigError {
            field: "axis".into(),
            line: None,
            msg: e.message().trim().to_owned(),
        })?;
        for a in &m.axes {
            if a.path.is_empty() || a.path.split('.').any(str::is_empty) {
                return Err(ConfigError {
                    field: "axis.path".into(),
                    line: None,
                    msg: format!("bad key path {:?}", a.path),
                });
            }
        }
        Ok(m)
    }

    /// One value per axis for every cell, last axis fastest. No axes means
    /// no cells.
    pub fn cells(&self) -> Vec<Vec<Value>> {
        if self.axes.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<Vec<Value>> = vec![Vec::new()];
        for a in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    a.values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push(v.clone());
                        c
                    })
                })
                .collect();
        }
        out
    }
}

/// Sets a dotted key, creating intermediate tables.
pub fn set_path(t: &mut Table, path: &str, v: Value) -> Result<(), ConfigError> {
    let bad = |msg: &str| ConfigError {
        field: path.to_owned(),
        line: None,
        msg: msg.to_owned(),
    };
    let mut parts = path.split('.').peekable();
    let mut cur = t;
    while let Some(p) = parts.next() {
        if parts.peek().is_none() {
            cur.insert(p.to_owned(), v);
            return Ok(());
        }
        cur = cur
            .entry(p.to_owned())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| bad("path runs through a non-table value"))?;
    }
    Err(bad("empty path"))
}

#[derive(Debug)]
pub struct CellResult {
    pub index: usize,
    pub values: Vec<Value>,
    pub dir: PathBuf,
    pub result: Result<AttackReport, RunError>,
}

pub fn cell_dir_name(index: usize) -> String {
    format!("cell_{index:03}")
}

fn show(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Runs every cell of `matrix` over `base` into `out/cell_NNN` and writes
/// `out/summary.csv`. A failing cell is marked and does not stop the rest.
pub fn run_sweep(base: &Table, matrix: &Matrix, out: &Path, jobs: usize) -> Result<Vec<CellResult>, RunError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let cells = matrix.cells();
    info!("sweep: {} cells over {} axes", cells.len(), matrix.axes.len());
    let run_cell = |(index, values): (usize, Vec<Value>)| {
        let dir = out.join(cell_dir_name(index));
        let result = (|| {
            let mut doc = base.clone();
            for (a, v) in matrix.axes.iter().zip(&values) {
                set_path(&mut doc, &a.path, v.clone())?;
            }
            let cfg = ScenarioConfig::from_table(&doc, None)?;
            run_to_dir(&cfg, &dir)
        })();
        if let Err(e) = &result {
            warn!("{}: {e}", dir.display());
        }
        CellResult {
            index,
            values,
            dir,
            result,
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| RunError::Io {
            path: out.to_owned(),
            source: io::Error::other(e),
        })?;
    let mut results: Vec<CellResult> = pool.install(|| {
        cells
            .into_iter()
            .enumerate()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(run_cell)
            .collect()
    });
    results.sort_by_key(|r| r.index);
    write_summary(&out.join(SUMMARY_FILE), matrix, &results)?;
    Ok(results)
}

fn write_summary(path: &Path, matrix: &Matrix, results: &[CellResult]) -> Result<(), RunError> {
    let to_io = |e: csv::Error| RunError::Io {
        path: path.to_owned(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    let mut header = vec!["cell".to_owned()];
    header.extend(matrix.axes.iter().map(|a| a.path.clone()));
    header.extend(["status", "verdict", "outcome"].map(String::from));
    w.write_record(&header).map_err(to_io)?;
    for r in results {
        let mut row = vec![cell_dir_name(r.index)];
        row.extend(r.values.iter().map(show));
        match &r.result {
            Ok(rep) => row.extend(["ok".to_owned(), rep.verdict.as_str().to_owned(), rep.outcome.clone()]),
            Err(e) => row.extend(["error".to_owned(), String::new(), e.to_string()]),
        }
        w.write_record(&row).map_err(to_io)?;
    }
    w.flush().map_err(|e| RunError::Io {
        path: path.to_owned(),
        source: e,
    })
}
