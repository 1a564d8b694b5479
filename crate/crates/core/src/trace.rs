//! Per-outer-iteration convergence records.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column header of trace CSV files.
pub const TRACE_HEADER: &str = "outer_iter,elapsed_sec,objective,mse_raw,mse_aligned";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer_iter: usize,
    /// Solver time since the start of the run; metric evaluation is excluded.
    pub elapsed_sec: f64,
    pub objective: f64,
    pub mse_raw: Option<f64>,
    pub mse_aligned: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn best_mse_aligned(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.mse_aligned).reduce(f64::min)
    }

    pub fn best_mse_raw(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.mse_raw).reduce(f64::min)
    }

    /// Elapsed time of the first row whose aligned MSE is at or below
    /// `threshold`.
    pub fn time_to_mse(&self, threshold: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.mse_aligned.is_some_and(|m| m <= threshold))
            .map(|r| r.elapsed_sec)
    }

    /// Outer iterations strictly increasing, timestamps nondecreasing.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| {
            w[1].outer_iter > w[0].outer_iter && w[1].elapsed_sec >= w[0].elapsed_sec
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        if self.rows.is_empty() {
            writer
                .write_record(TRACE_HEADER.split(','))
                .map_err(csv_error)?;
        }
        for row in &self.rows {
            writer.serialize(row).map_err(csv_error)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Trace> {
        let mut reader = csv::Reader::from_reader(input);
        let header = reader.headers().map_err(csv_error)?;
        if header.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
            return Err(Error::Format {
                format: "trace CSV",
                reason: format!("unexpected header {header:?}"),
            });
        }
        let rows = reader
            .deserialize()
            .collect::<std::result::Result<Vec<TraceRow>, _>>()
            .map_err(csv_error)?;
        Ok(Trace { rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Trace> {
        Trace::read_csv(std::fs::File::open(path)?)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format {
        format: "trace CSV",
        reason: e.to_string(),
    }
}
