use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard constraint set, applied entrywise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projection {
    #[default]
    None,
    Nonnegative,
    Box { lo: f64, hi: f64 },
}

impl Projection {
    pub fn validate(&self) -> Result<()> {
        if let Projection::Box { lo, hi } = *self {
            if !(lo <= hi) || lo.is_nan() || hi.is_nan() {
                return Err(Error::InvalidParameter(format!(
                    "box constraint needs lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Projection::None => "none",
            Projection::Nonnegative => "nonnegative",
            Projection::Box { .. } => "box",
        }
    }

    pub fn project_scalar(&self, x: f64) -> f64 {
        match *self {
            Projection::None => x,
            Projection::Nonnegative => x.max(0.0),
            Projection::Box { lo, hi } => x.clamp(lo, hi),
        }
    }

    pub fn project(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        match self {
            Projection::None => x.to_owned(),
            _ => x.mapv(|v| self.project_scalar(v)),
        }
    }

    pub fn project_in_place(&self, x: &mut Array2<f64>) {
        if !matches!(self, Projection::None) {
            x.mapv_inplace(|v| self.project_scalar(v));
        }
    }

    pub fn contains(&self, x: ArrayView2<'_, f64>) -> bool {
        match *self {
            Projection::None => true,
            Projection::Nonnegative => x.iter().all(|&v| v >= 0.0),
            Projection::Box { lo, hi } => x.iter().all(|&v| v >= lo && v <= hi),
        }
    }
}
