//! Problem definition: per-mode constraint/regularizer triples and the
//! objective being minimized,
//!
//! ```text
//! 1/2 ||Y - M(X)||_F^2 + sum_d h_d(L_d(F_d^T)),   F_d^T ∈ C_d,
//! ```
//!
//! with `X` the CP reconstruction of the factors and `M` the observation mask.

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::operators::{LinOp, LinOpKind, Projection, ProxFn};
use crate::tensor::{apply_mask, cp_reconstruct, FactorSet, Mask, Tensor3};

fn zero_prox() -> ProxFn {
    ProxFn::Zero
}

/// The triple `(C_d, h_d, L_d)` for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    #[serde(default)]
    pub projection: Projection,
    #[serde(default = "zero_prox")]
    pub regularizer: ProxFn,
    #[serde(default)]
    pub operator: Option<LinOpKind>,
}

impl Default for ModeSpec {
    fn default() -> Self {
        Self::unconstrained()
    }
}

impl ModeSpec {
    pub fn unconstrained() -> Self {
        Self {
            projection: Projection::None,
            regularizer: ProxFn::Zero,
            operator: None,
        }
    }

    pub fn nonnegative() -> Self {
        Self {
            projection: Projection::Nonnegative,
            ..Self::unconstrained()
        }
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = projection;
        self
    }

    /// Sets `h_d ∘ L_d`. A zero regularizer clears the operator.
    pub fn with_regularizer(mut self, regularizer: ProxFn, operator: LinOpKind) -> Self {
        self.operator = if regularizer.is_zero() { None } else { Some(operator) };
        self.regularizer = regularizer;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        self.regularizer.validate()?;
        match (&self.operator, self.regularizer.is_zero()) {
            (Some(_), true) => Err(Error::InvalidParameter(
                "an operator was given without a regularizer".into(),
            )),
            (None, false) => Err(Error::InvalidParameter(format!(
                "regularizer {} needs an operator",
                self.regularizer.name()
            ))),
            _ => Ok(()),
        }
    }

    /// Binds the operator to the subproblem variable shape `rank x n`.
    pub fn bind(&self, rank: usize, n: usize) -> Result<BoundMode> {
        self.validate()?;
        let operator = self
            .operator
            .clone()
            .map(|kind| LinOp::new(kind, rank, n))
            .transpose()?;
        Ok(BoundMode {
            projection: self.projection,
            regularizer: self.regularizer.clone(),
            operator,
        })
    }
}

/// A [`ModeSpec`] whose operator is bound to a concrete shape.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundMode {
    pub projection: Projection,
    pub regularizer: ProxFn,
    pub operator: Option<LinOp>,
}

impl BoundMode {
    /// Bound on `||L^* L||`, zero when there is no regularizer.
    pub fn op_norm(&self) -> f64 {
        self.operator.as_ref().map_or(0.0, LinOp::norm_bound)
    }

    /// `h(L(F))` for `F = F_d^T`.
    pub fn penalty(&self, f: ndarray::ArrayView2<'_, f64>) -> Result<f64> {
        match &self.operator {
            None => Ok(0.0),
            Some(op) => {
                let lf = op.forward(f)?;
                self.regularizer.value(lf.view())
            }
        }
    }
}

pub fn bind_all(specs: &[ModeSpec; 3], factors: &FactorSet) -> Result<[BoundMode; 3]> {
    let rank = factors.rank();
    let dims = factors.dims();
    Ok([
        specs[0].bind(rank, dims[0])?,
        specs[1].bind(rank, dims[1])?,
        specs[2].bind(rank, dims[2])?,
    ])
}

/// Value of the constrained factorization objective. Hard constraints are
/// not included; check feasibility with [`is_feasible`].
pub fn objective(y: &Tensor3, mask: &Mask, f: &FactorSet, specs: &[ModeSpec; 3]) -> Result<f64> {
    let bound = bind_all(specs, f)?;
    objective_bound(y, mask, f, &bound)
}

pub(crate) fn objective_bound(
    y: &Tensor3,
    mask: &Mask,
    f: &FactorSet,
    modes: &[BoundMode; 3],
) -> Result<f64> {
    if y.dims() != f.dims() {
        return Err(mismatch(format!(
            "data dims {:?} do not match factor dims {:?}",
            y.dims(),
            f.dims()
        )));
    }
    let recon = apply_mask(&cp_reconstruct(f), mask)?;
    let misfit: f64 = y
        .as_slice()
        .iter()
        .zip(recon.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let mut total = 0.5 * misfit;
    for (d, mode) in modes.iter().enumerate() {
        total += mode.penalty(f.factor(d).t())?;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("objective"));
    }
    Ok(total)
}

pub fn is_feasible(f: &FactorSet, specs: &[ModeSpec; 3]) -> bool {
    specs
        .iter()
        .enumerate()
        .all(|(d, s)| s.projection.contains(f.factor(d).view()))
}

/// The regularized nonnegative setup: l1 on mode 0 and squared Frobenius on
/// modes 1 and 2, identity operators, nonnegativity everywhere.
pub fn benchmark_modes(l1_weight: f64, frobenius_weight: f64) -> [ModeSpec; 3] {
    let sparse = ModeSpec::nonnegative().with_regularizer(ProxFn::l1(l1_weight), LinOpKind::Identity);
    let smooth = ModeSpec::nonnegative()
        .with_regularizer(ProxFn::squared_frobenius(frobenius_weight), LinOpKind::Identity);
    [sparse, smooth.clone(), smooth]
}
