//! CSV outputs: per-step energy table, nodal snapshots and study tables.
//!
//! Floating-point values are written with 17 significant digits, which
//! reproduces every `f64` exactly on reading.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use kwc_core::analysis::StudyReport;
use kwc_core::{Field, Grid, RunResult};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub const ENERGY_COLUMNS: [&str; 11] = [
    "step",
    "t",
    "F_prev",
    "F_curr",
    "dissipation",
    "forcing_rhs",
    "slack",
    "eta_min",
    "eta_max",
    "theta_min",
    "theta_max",
];

/// One row per step.
pub fn write_energy_csv(path: &Path, run: &RunResult) -> Result<(), OutputError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let result: csv::Result<()> = (|| {
        w.write_record(ENERGY_COLUMNS)?;
        for (r, s) in run.reports.iter().zip(&run.states[1..]) {
            let mut rec = vec![r.step_index.to_string()];
            rec.extend(
                [
                    r.t,
                    r.f_prev,
                    r.f_curr,
                    r.dissipation,
                    r.forcing_rhs,
                    r.slack,
                    s.eta.min(),
                    s.eta.max(),
                    s.theta.min(),
                    s.theta.max(),
                ]
                .map(fmt_f64),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })();
    result.map_err(|e| io_err(path)(e.into()))
}

/// Nodal values with the grid description of their header.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub spacing: Vec<f64>,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn of(field: &Field) -> Self {
        let g = field.grid();
        Snapshot {
            dim: g.dim(),
            cells: g.cells().to_vec(),
            spacing: g.spacing().to_vec(),
            values: field.values().to_vec(),
        }
    }

    /// Places the values on `grid`, which must have the same shape.
    pub fn to_field(&self, grid: &Arc<Grid>) -> Result<Field, String> {
        if self.dim != grid.dim() || self.cells != grid.cells() {
            return Err(format!(
                "snapshot grid {:?} (dim {}) does not match {:?} (dim {})",
                self.cells,
                self.dim,
                grid.cells(),
                grid.dim()
            ));
        }
        let same_spacing = self
            .spacing
            .iter()
            .zip(grid.spacing())
            .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs());
        if !same_spacing {
            return Err(format!("snapshot spacing {:?} does not match {:?}", self.spacing, grid.spacing()));
        }
        Field::new(grid.clone(), self.values.clone()).map_err(|e| e.to_string())
    }
}

/// Three header lines (`dim`, `cells`, `spacing`), then one nodal value per
/// line in node order.
pub fn write_snapshot(path: &Path, field: &Field) -> Result<(), OutputError> {
    let s = Snapshot::of(field);
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let join = |xs: Vec<String>| xs.join(" ");
    let result: io::Result<()> = (|| {
        writeln!(w, "dim {}", s.dim)?;
        writeln!(w, "cells {}", join(s.cells.iter().map(|c| c.to_string()).collect()))?;
        writeln!(w, "spacing {}", join(s.spacing.iter().map(|h| fmt_f64(*h)).collect()))?;
        for v in &s.values {
            writeln!(w, "{}", fmt_f64(*v))?;
        }
        w.flush()
    })();
    result.map_err(io_err(path))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_snapshot(&text).map_err(|message| OutputError::Format {
        path: path.to_path_buf(),
        message,
    })
}

fn parse_snapshot(text: &str) -> Result<Snapshot, String> {
    let mut lines = text.lines().enumerate();
    let mut header = |key: &str| -> Result<Vec<String>, String> {
        let (i, line) = lines.next().ok_or_else(|| format!("missing `{key}` header"))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(format!("line {}: expected `{key}` header", i + 1));
        }
        Ok(parts.map(String::from).collect())
    };
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("bad number `{s}`: {e}"));
    let int = |s: &str| s.parse::<usize>().map_err(|e| format!("bad integer `{s}`: {e}"));
    let dim = header("dim")?.first().map(|s| int(s)).transpose()?.ok_or("empty `dim` header")?;
    let cells = header("cells")?.iter().map(|s| int(s)).collect::<Result<Vec<_>, _>>()?;
    let spacing = header("spacing")?.iter().map(|s| num(s)).collect::<Result<Vec<_>, _>>()?;
    if cells.len() != dim || spacing.len() != dim {
        return Err(format!("header describes {} cell counts and {} spacings for dim {dim}", cells.len(), spacing.len()));
    }
    let values = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| num(l.trim()).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let expected: usize = cells.iter().map(|c| c + 1).product();
    if values.len() != expected {
        return Err(format!("expected {expected} nodal values, found {}", values.len()));
    }
    Ok(Snapshot {
        dim,
        cells,
        spacing,
        values,
    })
}

/// Step indices that receive a snapshot: every `stride`-th step and the
/// last one; `stride = 0` keeps the first and last only.
pub fn snapshot_indices(steps: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = if stride == 0 {
        vec![0]
    } else {
        (0..=steps).step_by(stride).collect()
    };
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

/// Writes `eta_<i>.csv` and `theta_<i>.csv`; returns the written paths.
pub fn write_snapshots(dir: &Path, run: &RunResult, stride: usize) -> Result<Vec<PathBuf>, OutputError> {
    let mut paths = Vec::new();
    for i in snapshot_indices(run.states.len() - 1, stride) {
        let s = &run.states[i];
        for (name, field) in [("eta", &s.eta), ("theta", &s.theta)] {
            let p = dir.join(format!("{name}_{i}.csv"));
            write_snapshot(&p, field)?;
            paths.push(p);
        }
    }
    Ok(paths)
}

/// Writes `study_<kind>.csv` and the summary block `study_<kind>.txt`.
pub fn write_study(dir: &Path, report: &StudyReport) -> Result<PathBuf, OutputError> {
    let path = dir.join(format!("study_{}.csv", report.kind.name()));
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let result: csv::Result<()> = (|| {
        w.write_record(&report.columns)?;
        for row in &report.rows {
            w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
        }
        w.flush()?;
        Ok(())
    })();
    result.map_err(|e| io_err(&path)(e.into()))?;
    let txt = dir.join(format!("study_{}.txt", report.kind.name()));
    fs::write(&txt, report.summary()).map_err(io_err(&txt))?;
    Ok(path)
}
