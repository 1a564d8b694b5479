//! AO-ADMM baseline: the same outer loop, with each subproblem solved by
//! scaled-form ADMM on the split `F = Z`,
//!
//! ```text
//! F = (A + rho I)^{-1} (B + rho (Z - U))      Cholesky, once per mode visit
//! Z = prox_{(h + i_C) / rho}(F + U)
//! U = U + F - Z
//! ```
//!
//! Only regularizers whose composite prox with the constraint has a closed
//! form are accepted; structured operators are rejected.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::driver::{run_outer_loop, DriverConfig, FitResult, FitState, InnerSolver, ModeContext};
use crate::error::{mismatch, Error, Result};
use crate::model::{bind_all, BoundMode, ModeSpec};
use crate::operators::{LinOpKind, Projection, ProxFn};
use crate::pds::QuadraticLoss;
use crate::tensor::{FactorSet, Mask, Tensor3};

const SOLVER: &str = "AO-ADMM";

/// How the ADMM penalty is chosen at each mode visit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhoRule {
    /// `rho = trace(W^T W) / R`.
    TraceOverRank,
    Fixed { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmConfig {
    pub rho: RhoRule,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: RhoRule::TraceOverRank,
        }
    }
}

impl RhoRule {
    pub fn rho(&self, trace: f64, rank: usize) -> f64 {
        match *self {
            RhoRule::TraceOverRank => trace / rank as f64,
            RhoRule::Fixed { value } => value,
        }
    }
}

/// Counters for the efficiency contract of the baseline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmmStats {
    pub mode_visits: usize,
    pub cholesky_factorizations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub primal: Array2<f64>,
    pub aux: Array2<f64>,
    /// Scaled dual.
    pub dual: Array2<f64>,
    pub rho: f64,
}

impl AdmmState {
    /// Cold start at `primal` with `Z = F` and `U = 0`.
    pub fn new(primal: Array2<f64>, rho: f64) -> Self {
        Self {
            aux: primal.clone(),
            dual: Array2::zeros(primal.raw_dim()),
            primal,
            rho,
        }
    }
}

/// Lower-triangular `L` with `L L^T = a`.
pub fn cholesky(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(mismatch(format!("Cholesky needs a square matrix, got {:?}", a.dim())));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / ljj;
        }
    }
    Ok(l)
}

/// Solves `L L^T X = rhs` column by column.
pub fn cholesky_solve(l: ArrayView2<'_, f64>, rhs: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut x = rhs.to_owned();
    for mut col in x.columns_mut() {
        for i in 0..n {
            let mut v = col[i];
            for k in 0..i {
                v -= l[[i, k]] * col[k];
            }
            col[i] = v / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut v = col[i];
            for k in i + 1..n {
                v -= l[[k, i]] * col[k];
            }
            col[i] = v / l[[i, i]];
        }
    }
    x
}

fn check_supported(mode: &BoundMode) -> Result<()> {
    if let Some(op) = &mode.operator {
        if !matches!(op.kind(), LinOpKind::Identity) {
            return Err(Error::Unsupported {
                solver: SOLVER,
                reason: format!(
                    "structured operator {} has no closed-form prox of h o L",
                    op.kind().name()
                ),
            });
        }
    }
    let separable = matches!(
        mode.regularizer,
        ProxFn::Zero | ProxFn::L1 { .. } | ProxFn::SquaredFrobenius { .. }
    );
    if !separable && !matches!(mode.projection, Projection::None) {
        return Err(Error::Unsupported {
            solver: SOLVER,
            reason: format!(
                "no closed-form prox for {} combined with a {} constraint",
                mode.regularizer.name(),
                mode.projection.name()
            ),
        });
    }
    Ok(())
}

/// Prox of `h + i_C` at index `gamma`. For the entrywise regularizers this is
/// the constraint projection of the regularizer's prox.
pub fn composite_prox(mode: &BoundMode, x: ArrayView2<'_, f64>, gamma: f64) -> Result<Array2<f64>> {
    check_supported(mode)?;
    let mut out = mode.regularizer.prox(x, gamma)?;
    mode.projection.project_in_place(&mut out);
    Ok(out)
}

/// Runs `n_inner` ADMM iterations; the Cholesky factor of `A + rho I` is
/// computed once and reused.
pub fn solve_subproblem_admm(
    state: AdmmState,
    mode: &BoundMode,
    loss: &QuadraticLoss<'_>,
    n_inner: usize,
    stats: &mut AdmmStats,
) -> Result<AdmmState> {
    check_supported(mode)?;
    if n_inner == 0 {
        return Err(Error::InvalidParameter("n_inner must be at least 1".into()));
    }
    let gram = loss.gram().ok_or_else(|| Error::Unsupported {
        solver: SOLVER,
        reason: "masked data".into(),
    })?;
    let AdmmState {
        mut primal,
        mut aux,
        mut dual,
        rho,
    } = state;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    let shape = loss.variable_shape();
    if primal.dim() != shape || aux.dim() != shape || dual.dim() != shape {
        return Err(mismatch(format!("ADMM variables must all be {shape:?}")));
    }

    let mut shifted = gram.clone();
    shifted.diag_mut().mapv_inplace(|v| v + rho);
    let factor = cholesky(shifted.view())?;
    stats.cholesky_factorizations += 1;

    let rhs = loss.rhs();
    for _ in 0..n_inner {
        let mut target = &aux - &dual;
        target.mapv_inplace(|v| rho * v);
        target += rhs;
        primal = cholesky_solve(factor.view(), target.view());

        let point = &primal + &dual;
        aux = composite_prox(mode, point.view(), 1.0 / rho)?;
        dual += &primal;
        dual -= &aux;

        if primal.iter().chain(dual.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("ADMM iteration"));
        }
    }
    Ok(AdmmState {
        primal,
        aux,
        dual,
        rho,
    })
}

struct AdmmInner {
    modes: [BoundMode; 3],
    aux: [Array2<f64>; 3],
    duals: [Array2<f64>; 3],
    n_inner: usize,
    rho: RhoRule,
    stats: AdmmStats,
}

impl InnerSolver for AdmmInner {
    type Stats = AdmmStats;

    fn update(&mut self, d: usize, factors: &mut FactorSet, ctx: ModeContext<'_>) -> Result<()> {
        self.stats.mode_visits += 1;
        let gram = ctx.gram.ok_or_else(|| Error::Unsupported {
            solver: SOLVER,
            reason: "masked data".into(),
        })?;
        let loss = QuadraticLoss::with_gram(ctx.w, ctx.yd, gram)?;
        if loss.trace_bound() == 0.0 {
            return Ok(());
        }
        let state = AdmmState {
            primal: factors.factor(d).t().to_owned(),
            aux: std::mem::take(&mut self.aux[d]),
            dual: std::mem::take(&mut self.duals[d]),
            rho: self.rho.rho(loss.trace_bound(), factors.rank()),
        };
        let next = solve_subproblem_admm(state, &self.modes[d], &loss, self.n_inner, &mut self.stats)?;
        factors.set_factor(d, next.aux.t().to_owned())?;
        self.aux[d] = next.aux;
        self.duals[d] = next.dual;
        Ok(())
    }

    fn finish(self, factors: FactorSet) -> (FitState, AdmmStats) {
        let state = FitState {
            factors,
            duals: self.duals,
            aux: Some(self.aux),
        };
        (state, self.stats)
    }
}

fn check_problem(mask: &Mask, specs: &[ModeSpec; 3], factors: &FactorSet) -> Result<[BoundMode; 3]> {
    if !mask.is_full() {
        return Err(Error::Unsupported {
            solver: SOLVER,
            reason: "masked data".into(),
        });
    }
    let modes = bind_all(specs, factors)?;
    for mode in &modes {
        check_supported(mode)?;
    }
    Ok(modes)
}

pub fn ao_admm_factorize(
    y: &Tensor3,
    mask: &Mask,
    specs: &[ModeSpec; 3],
    cfg: &DriverConfig,
    admm: &AdmmConfig,
    truth: Option<&FactorSet>,
) -> Result<FitResult> {
    ao_admm_factorize_with_stats(y, mask, specs, cfg, admm, truth).map(|(fit, _)| fit)
}

pub fn ao_admm_factorize_with_stats(
    y: &Tensor3,
    mask: &Mask,
    specs: &[ModeSpec; 3],
    cfg: &DriverConfig,
    admm: &AdmmConfig,
    truth: Option<&FactorSet>,
) -> Result<(FitResult, AdmmStats)> {
    cfg.validate()?;
    let factors = crate::driver::init_factors(y.dims(), cfg.rank, cfg.seed)?;
    let start = FitState {
        aux: Some(factors.factors().clone().map(|f| f.t().to_owned())),
        duals: factors.factors().clone().map(|f| Array2::zeros((f.ncols(), f.nrows()))),
        factors,
    };
    ao_admm_factorize_from(y, mask, specs, cfg, admm, truth, start)
}

/// Resumes AO-ADMM from a previous [`FitResult::state`].
pub fn ao_admm_factorize_from(
    y: &Tensor3,
    mask: &Mask,
    specs: &[ModeSpec; 3],
    cfg: &DriverConfig,
    admm: &AdmmConfig,
    truth: Option<&FactorSet>,
    start: FitState,
) -> Result<(FitResult, AdmmStats)> {
    cfg.validate()?;
    if let RhoRule::Fixed { value } = admm.rho {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {value}")));
        }
    }
    let modes = check_problem(mask, specs, &start.factors)?;
    let aux = start.aux.ok_or_else(|| {
        Error::InvalidParameter("AO-ADMM state needs auxiliary variables".into())
    })?;
    for d in 0..3 {
        let shape = (cfg.rank, start.factors.dims()[d]);
        if aux[d].dim() != shape || start.duals[d].dim() != shape {
            return Err(mismatch(format!("ADMM state for mode {d} must be {shape:?}")));
        }
    }
    let solver = AdmmInner {
        modes: modes.clone(),
        aux,
        duals: start.duals,
        n_inner: cfg.n_inner,
        rho: admm.rho,
        stats: AdmmStats::default(),
    };
    run_outer_loop(y, mask, &modes, cfg, truth, start.factors, solver)
}
