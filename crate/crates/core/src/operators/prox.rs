use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};

/// Convex regularizer with its weight folded in.
///
/// `GroupL2` sums `weight * ||x_{r,g}||_2` over every row `r` and every group
/// `g` of column indices; groups must be disjoint. Columns outside every group
/// are unpenalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxFn {
    Zero,
    L1 { weight: f64 },
    SquaredFrobenius { weight: f64 },
    GroupL2 { weight: f64, groups: Vec<Vec<usize>> },
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "prox index must be positive and finite, got {gamma}"
        )))
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

impl ProxFn {
    pub fn l1(weight: f64) -> Self {
        ProxFn::L1 { weight }
    }

    pub fn squared_frobenius(weight: f64) -> Self {
        ProxFn::SquaredFrobenius { weight }
    }

    pub fn group_l2(weight: f64, groups: Vec<Vec<usize>>) -> Result<Self> {
        let p = ProxFn::GroupL2 { weight, groups };
        p.validate()?;
        Ok(p)
    }

    pub fn weight(&self) -> f64 {
        match *self {
            ProxFn::Zero => 0.0,
            ProxFn::L1 { weight }
            | ProxFn::SquaredFrobenius { weight }
            | ProxFn::GroupL2 { weight, .. } => weight,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ProxFn::Zero)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProxFn::Zero => "zero",
            ProxFn::L1 { .. } => "l1",
            ProxFn::SquaredFrobenius { .. } => "squared_frobenius",
            ProxFn::GroupL2 { .. } => "group_l2",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weight();
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "regularizer weight must be finite and nonnegative, got {w}"
            )));
        }
        if let ProxFn::GroupL2 { groups, .. } = self {
            let mut seen = std::collections::HashSet::new();
            for g in groups {
                if g.is_empty() {
                    return Err(Error::InvalidParameter("empty group in group_l2".into()));
                }
                for &c in g {
                    if !seen.insert(c) {
                        return Err(Error::InvalidParameter(format!(
                            "group_l2 groups must be disjoint; column {c} repeats"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_groups(groups: &[Vec<usize>], cols: usize) -> Result<()> {
        match groups.iter().flatten().find(|&&c| c >= cols) {
            Some(c) => Err(mismatch(format!(
                "group_l2 column {c} out of range for {cols} columns"
            ))),
            None => Ok(()),
        }
    }

    /// Function value at `x`.
    pub fn value(&self, x: ArrayView2<'_, f64>) -> Result<f64> {
        Ok(match self {
            ProxFn::Zero => 0.0,
            ProxFn::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            ProxFn::SquaredFrobenius { weight } => weight * x.iter().map(|v| v * v).sum::<f64>(),
            ProxFn::GroupL2 { weight, groups } => {
                Self::check_groups(groups, x.ncols())?;
                let mut total = 0.0;
                for row in x.rows() {
                    for g in groups {
                        total += g.iter().map(|&c| row[c] * row[c]).sum::<f64>().sqrt();
                    }
                }
                weight * total
            }
        })
    }

    /// `argmin_y self(y) + ||y - x||^2 / (2 gamma)`.
    pub fn prox(&self, x: ArrayView2<'_, f64>, gamma: f64) -> Result<Array2<f64>> {
        check_gamma(gamma)?;
        Ok(match self {
            ProxFn::Zero => x.to_owned(),
            ProxFn::L1 { weight } => {
                let t = gamma * weight;
                x.mapv(|v| soft_threshold(v, t))
            }
            ProxFn::SquaredFrobenius { weight } => {
                let s = 1.0 + 2.0 * gamma * weight;
                x.mapv(|v| v / s)
            }
            ProxFn::GroupL2 { weight, groups } => {
                Self::check_groups(groups, x.ncols())?;
                let t = gamma * weight;
                let mut out = x.to_owned();
                for mut row in out.rows_mut() {
                    for g in groups {
                        let norm = g.iter().map(|&c| row[c] * row[c]).sum::<f64>().sqrt();
                        let scale = if norm > t { 1.0 - t / norm } else { 0.0 };
                        for &c in g {
                            row[c] *= scale;
                        }
                    }
                }
                out
            }
        })
    }

    /// Prox of the convex conjugate through the Moreau decomposition:
    /// `x - gamma * prox_{self / gamma}(x / gamma)`.
    pub fn prox_conjugate(&self, x: ArrayView2<'_, f64>, gamma: f64) -> Result<Array2<f64>> {
        check_gamma(gamma)?;
        if self.is_zero() {
            // conjugate of 0 is the indicator of {0}
            return Ok(Array2::zeros(x.raw_dim()));
        }
        let scaled = x.mapv(|v| v / gamma);
        let inner = self.prox(scaled.view(), 1.0 / gamma)?;
        let mut out = x.to_owned();
        Zip::from(&mut out).and(&inner).for_each(|o, &p| *o -= gamma * p);
        Ok(out)
    }
}
