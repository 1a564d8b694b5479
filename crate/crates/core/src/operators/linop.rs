use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::rng::SeededStream;

/// Multiplier applied to power-iteration estimates of `||L^* L||`, which
/// approach the true value from below.
pub const NORM_SAFETY_FACTOR: f64 = 1.01;

/// Which linear operator to apply to `F = F_d^T` (shape `R x N_d`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinOpKind {
    Identity,
    /// Forward differences along the column (mode-index) axis:
    /// `Y[r, j] = X[r, j + 1] - X[r, j]`.
    RowDifference,
    /// Concatenates the listed column blocks side by side. Blocks may overlap.
    GroupReplicate { blocks: Vec<Vec<usize>> },
}

impl LinOpKind {
    pub fn name(&self) -> &'static str {
        match self {
            LinOpKind::Identity => "identity",
            LinOpKind::RowDifference => "row_difference",
            LinOpKind::GroupReplicate { .. } => "group_replicate",
        }
    }
}

/// A [`LinOpKind`] bound to an input shape, with a cached bound on `||L^* L||`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinOp {
    kind: LinOpKind,
    rows: usize,
    cols: usize,
    norm_bound: f64,
}

impl LinOp {
    pub fn new(kind: LinOpKind, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "operator input shape must be positive, got {rows}x{cols}"
            )));
        }
        match &kind {
            LinOpKind::Identity => {}
            LinOpKind::RowDifference => {
                if cols < 2 {
                    return Err(Error::InvalidParameter(
                        "row_difference needs at least 2 columns".into(),
                    ));
                }
            }
            LinOpKind::GroupReplicate { blocks } => {
                if blocks.is_empty() || blocks.iter().any(|b| b.is_empty()) {
                    return Err(Error::InvalidParameter(
                        "group_replicate needs nonempty blocks".into(),
                    ));
                }
                if let Some(c) = blocks.iter().flatten().find(|&&c| c >= cols) {
                    return Err(Error::InvalidParameter(format!(
                        "block column {c} out of range for {cols} columns"
                    )));
                }
            }
        }
        let mut op = Self {
            kind,
            rows,
            cols,
            norm_bound: 0.0,
        };
        op.norm_bound = op.closed_form_norm();
        Ok(op)
    }

    pub fn kind(&self) -> &LinOpKind {
        &self.kind
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn output_shape(&self) -> (usize, usize) {
        let cols = match &self.kind {
            LinOpKind::Identity => self.cols,
            LinOpKind::RowDifference => self.cols - 1,
            LinOpKind::GroupReplicate { blocks } => blocks.iter().map(Vec::len).sum(),
        };
        (self.rows, cols)
    }

    /// Cached upper bound on `||L^* L||`.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    fn closed_form_norm(&self) -> f64 {
        match &self.kind {
            LinOpKind::Identity => 1.0,
            // ||D^T D|| = 2 - 2 cos(pi (N-1) / N) < 4
            LinOpKind::RowDifference => 4.0,
            LinOpKind::GroupReplicate { blocks } => {
                // L^* L is diagonal with the cover count of each column
                let mut cover = vec![0usize; self.cols];
                for &c in blocks.iter().flatten() {
                    cover[c] += 1;
                }
                cover.into_iter().max().unwrap_or(0) as f64
            }
        }
    }

    /// Upper bound on `||L^* L||`: the closed form for every catalog kind.
    pub fn estimate_norm(&self, iters: usize, tol: f64) -> f64 {
        let _ = (iters, tol);
        self.norm_bound
    }

    /// Power-iteration estimate of `||L^* L||` times [`NORM_SAFETY_FACTOR`];
    /// used for operators without a closed form and to cross-check the
    /// closed forms.
    pub fn estimate_norm_power(&self, iters: usize, tol: f64) -> f64 {
        NORM_SAFETY_FACTOR * self.power_iteration(iters, tol)
    }

    /// Raw power-iteration estimate of the largest eigenvalue of `L^* L`.
    pub fn power_iteration(&self, iters: usize, tol: f64) -> f64 {
        let mut stream = SeededStream::new(0x6e6f_726d);
        let mut v = Array2::from_shape_fn((self.rows, self.cols), |_| stream.standard_normal());
        let mut lambda = 0.0;
        for _ in 0..iters.max(1) {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v.mapv_inplace(|x| x / norm);
            let lv = self.forward(v.view()).expect("shape matches by construction");
            let next = self.adjoint(lv.view()).expect("shape matches by construction");
            let estimate = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = next;
            let converged = (estimate - lambda).abs() <= tol * estimate;
            lambda = estimate;
            if converged {
                break;
            }
        }
        lambda
    }

    fn check(&self, x: ArrayView2<'_, f64>, expected: (usize, usize), what: &str) -> Result<()> {
        if x.dim() != expected {
            return Err(mismatch(format!(
                "{} {what} must be {expected:?}, got {:?}",
                self.kind.name(),
                x.dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(x, self.input_shape(), "input")?;
        Ok(match &self.kind {
            LinOpKind::Identity => x.to_owned(),
            LinOpKind::RowDifference => &x.slice(s![.., 1..]) - &x.slice(s![.., ..-1]),
            LinOpKind::GroupReplicate { blocks } => {
                let mut out = Array2::zeros(self.output_shape());
                let mut offset = 0;
                for block in blocks {
                    for (k, &c) in block.iter().enumerate() {
                        out.column_mut(offset + k).assign(&x.column(c));
                    }
                    offset += block.len();
                }
                out
            }
        })
    }

    pub fn adjoint(&self, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(y, self.output_shape(), "adjoint input")?;
        Ok(match &self.kind {
            LinOpKind::Identity => y.to_owned(),
            LinOpKind::RowDifference => {
                let n = self.cols;
                let mut out = Array2::zeros((self.rows, n));
                for (mut o, yr) in out.rows_mut().into_iter().zip(y.rows()) {
                    o[0] = -yr[0];
                    for j in 1..n - 1 {
                        o[j] = yr[j - 1] - yr[j];
                    }
                    o[n - 1] = yr[n - 2];
                }
                out
            }
            LinOpKind::GroupReplicate { blocks } => {
                let mut out = Array2::zeros((self.rows, self.cols));
                let mut offset = 0;
                for block in blocks {
                    for (k, &c) in block.iter().enumerate() {
                        let mut col = out.column_mut(c);
                        col += &y.column(offset + k);
                    }
                    offset += block.len();
                }
                out
            }
        })
    }
}
