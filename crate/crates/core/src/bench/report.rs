use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::trace::Trace;

/// One trace file condensed to a table row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub outer_iterations: usize,
    pub final_objective: Option<f64>,
    pub best_mse_aligned: Option<f64>,
    pub best_mse_raw: Option<f64>,
    pub solver_sec: Option<f64>,
    pub time_to_threshold_sec: Option<f64>,
}

impl ReportRow {
    pub fn from_trace(name: String, trace: &Trace, threshold: Option<f64>) -> Self {
        let last = trace.last();
        Self {
            name,
            outer_iterations: trace.len(),
            final_objective: last.map(|r| r.objective),
            best_mse_aligned: trace.best_mse_aligned(),
            best_mse_raw: trace.best_mse_raw(),
            solver_sec: last.map(|r| r.elapsed_sec),
            time_to_threshold_sec: threshold.and_then(|t| trace.time_to_mse(t)),
        }
    }
}

fn display_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Loads each trace CSV. Directories contribute every `*.csv` inside them,
/// sorted by name.
pub fn collect(paths: &[PathBuf], threshold: Option<f64>) -> Result<Vec<ReportRow>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            inner.retain(|f| f.extension().is_some_and(|e| e == "csv"));
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| Ok(ReportRow::from_trace(display_name(f), &Trace::load(f)?, threshold)))
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

/// Fixed-width comparison table.
pub fn render(rows: &[ReportRow]) -> String {
    let header = [
        "trace",
        "outer",
        "final_objective",
        "best_mse_aligned",
        "best_mse_raw",
        "solver_sec",
        "time_to_threshold",
    ];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.outer_iterations.to_string(),
                cell(r.final_objective),
                cell(r.best_mse_aligned),
                cell(r.best_mse_raw),
                cell(r.solver_sec),
                cell(r.time_to_threshold_sec),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header);
    for row in &body {
        line(&row.each_ref().map(String::as_str));
    }
    out
}
