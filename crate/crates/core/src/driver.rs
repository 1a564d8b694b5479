//! Alternating-optimization outer loop.
//!
//! Each outer iteration visits modes 0, 1, 2 in order. A visit forms
//! `W = ⊙_{i != d} F_i` (ascending order), the data unfolding `Y_(d)` and the
//! Gram matrix, then hands the subproblem to an inner solver warm-started from
//! the state it left behind on the previous visit.

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::metrics::mse_pair;
use crate::model::{bind_all, objective_bound, BoundMode, ModeSpec};
use crate::pds::{compute_stepsizes, solve_subproblem, QuadraticLoss, SubproblemState};
use crate::rng::{SeededStream, INIT_STREAM};
use crate::tensor::{Dims, FactorSet, Mask, Tensor3};
use crate::trace::{Trace, TraceRow};

/// Floor on the previous objective in the relative-change stopping rule.
pub const OBJECTIVE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    /// `|MSE_k - MSE_{k-1}| < tol` (aligned MSE); needs ground truth.
    MseVsTruth,
    /// `|obj_k - obj_{k-1}| / max(obj_{k-1}, 1e-12) < tol`.
    ObjectiveRelChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    IterationCap,
}

/// Loop settings shared by every rank; see [`DriverConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverSettings {
    pub n_inner: usize,
    pub max_outer: usize,
    pub stop_tol: f64,
    pub stop_metric: StopMetric,
    /// Seed of the factor initialization.
    pub seed: u64,
}

impl Default for DriverSettings {
    fn default() -> Self {
        Self {
            n_inner: 5,
            max_outer: 1000,
            stop_tol: 1e-5,
            stop_metric: StopMetric::ObjectiveRelChange,
            seed: 0,
        }
    }
}

impl DriverSettings {
    pub fn with_rank(self, rank: usize) -> DriverConfig {
        DriverConfig {
            rank,
            n_inner: self.n_inner,
            max_outer: self.max_outer,
            stop_tol: self.stop_tol,
            stop_metric: self.stop_metric,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub rank: usize,
    pub n_inner: usize,
    pub max_outer: usize,
    pub stop_tol: f64,
    pub stop_metric: StopMetric,
    pub seed: u64,
}

impl DriverConfig {
    pub fn new(rank: usize) -> Self {
        DriverSettings::default().with_rank(rank)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidParameter("rank must be at least 1".into()));
        }
        if self.n_inner == 0 {
            return Err(Error::InvalidParameter("n_inner must be at least 1".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidParameter("max_outer must be at least 1".into()));
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stop_tol must be positive, got {}",
                self.stop_tol
            )));
        }
        Ok(())
    }
}

/// Factors plus whatever inner-solver state is carried between visits.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub factors: FactorSet,
    /// Per-mode dual variables (`G_d` for AO-PDS, scaled duals for AO-ADMM).
    pub duals: [Array2<f64>; 3],
    /// Per-mode auxiliary split variables (AO-ADMM only).
    pub aux: Option<[Array2<f64>; 3]>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub factors: FactorSet,
    pub duals: [Array2<f64>; 3],
    pub aux: Option<[Array2<f64>; 3]>,
    pub trace: Trace,
    pub outer_iterations: usize,
    pub stop_reason: StopReason,
}

impl FitResult {
    /// State to resume from with [`factorize_from`].
    pub fn state(&self) -> FitState {
        FitState {
            factors: self.factors.clone(),
            duals: self.duals.clone(),
            aux: self.aux.clone(),
        }
    }
}

/// I.i.d. uniform (0, 1) factors from the initialization stream of `seed`,
/// filled mode by mode in row-major order.
pub fn init_factors(dims: Dims, rank: usize, seed: u64) -> Result<FactorSet> {
    if rank == 0 {
        return Err(Error::InvalidParameter("rank must be at least 1".into()));
    }
    let mut stream = SeededStream::with_stream(seed, INIT_STREAM);
    FactorSet::new(dims.map(|n| Array2::from_shape_fn((n, rank), |_| stream.uniform())))
}

/// Data of one mode visit.
pub(crate) struct ModeContext<'a> {
    pub w: ArrayView2<'a, f64>,
    pub yd: ArrayView2<'a, f64>,
    pub mask: Option<ArrayView2<'a, bool>>,
    /// `W^T W` built from the factor Gram matrices; unmasked runs only.
    pub gram: Option<Array2<f64>>,
}

pub(crate) trait InnerSolver {
    type Stats;
    fn update(&mut self, mode: usize, factors: &mut FactorSet, ctx: ModeContext<'_>) -> Result<()>;
    fn finish(self, factors: FactorSet) -> (FitState, Self::Stats);
}

struct PdsInner {
    modes: [BoundMode; 3],
    duals: [Array2<f64>; 3],
    n_inner: usize,
}

impl InnerSolver for PdsInner {
    type Stats = ();

    fn update(&mut self, d: usize, factors: &mut FactorSet, ctx: ModeContext<'_>) -> Result<()> {
        let loss = match ctx.gram {
            Some(gram) => QuadraticLoss::with_gram(ctx.w, ctx.yd, gram)?,
            None => QuadraticLoss::new(ctx.w, ctx.yd, ctx.mask)?,
        };
        if loss.trace_bound() == 0.0 {
            // W = 0: the data term is constant and the mode is left as is
            return Ok(());
        }
        let mode = &self.modes[d];
        let steps = compute_stepsizes(loss.trace_bound(), mode.op_norm())?;
        let state = SubproblemState {
            primal: factors.factor(d).t().to_owned(),
            dual: std::mem::take(&mut self.duals[d]),
        };
        let next = solve_subproblem(state, mode, &loss, &steps, self.n_inner)?;
        factors.set_factor(d, next.primal.t().to_owned())?;
        self.duals[d] = next.dual;
        Ok(())
    }

    fn finish(self, factors: FactorSet) -> (FitState, ()) {
        let state = FitState {
            factors,
            duals: self.duals,
            aux: None,
        };
        (state, ())
    }
}

fn zero_duals(modes: &[BoundMode; 3], rank: usize) -> [Array2<f64>; 3] {
    [0, 1, 2].map(|d| match &modes[d].operator {
        Some(op) => Array2::zeros(op.output_shape()),
        None => Array2::zeros((rank, 0)),
    })
}

/// Runs AO-PDS from the uniform initialization of [`init_factors`].
pub fn factorize(
    y: &Tensor3,
    mask: &Mask,
    specs: &[ModeSpec; 3],
    cfg: &DriverConfig,
    truth: Option<&FactorSet>,
) -> Result<FitResult> {
    cfg.validate()?;
    let factors = init_factors(y.dims(), cfg.rank, cfg.seed)?;
    let modes = bind_all(specs, &factors)?;
    let duals = zero_duals(&modes, cfg.rank);
    let start = FitState {
        factors,
        duals,
        aux: None,
    };
    factorize_from(y, mask, specs, cfg, truth, start)
}

/// Runs AO-PDS warm-started from `start` (factors and duals).
pub fn factorize_from(
    y: &Tensor3,
    mask: &Mask,
    specs: &[ModeSpec; 3],
    cfg: &DriverConfig,
    truth: Option<&FactorSet>,
    start: FitState,
) -> Result<FitResult> {
    cfg.validate()?;
    let modes = bind_all(specs, &start.factors)?;
    for (d, mode) in modes.iter().enumerate() {
        let expected = match &mode.operator {
            Some(op) => op.output_shape(),
            None => (cfg.rank, 0),
        };
        if start.duals[d].dim() != expected {
            return Err(mismatch(format!(
                "dual {d} must be {expected:?}, got {:?}",
                start.duals[d].dim()
            )));
        }
    }
    let solver = PdsInner {
        modes: modes.clone(),
        duals: start.duals,
        n_inner: cfg.n_inner,
    };
    run_outer_loop(y, mask, &modes, cfg, truth, start.factors, solver).map(|(fit, ())| fit)
}

struct Metrics {
    objective: f64,
    mse: Option<(f64, f64)>,
}

fn evaluate(
    y: &Tensor3,
    mask: &Mask,
    factors: &FactorSet,
    modes: &[BoundMode; 3],
    truth: Option<&FactorSet>,
) -> Result<Metrics> {
    Ok(Metrics {
        objective: objective_bound(y, mask, factors, modes)?,
        mse: truth.map(|t| mse_pair(factors, t)).transpose()?,
    })
}

pub(crate) fn run_outer_loop<S: InnerSolver>(
    y: &Tensor3,
    mask: &Mask,
    modes: &[BoundMode; 3],
    cfg: &DriverConfig,
    truth: Option<&FactorSet>,
    mut factors: FactorSet,
    mut solver: S,
) -> Result<(FitResult, S::Stats)> {
    let dims = y.dims();
    if mask.dims() != dims {
        return Err(mismatch(format!(
            "mask dims {:?} do not match data dims {dims:?}",
            mask.dims()
        )));
    }
    if factors.dims() != dims || factors.rank() != cfg.rank {
        return Err(mismatch(format!(
            "initial factors are {:?} with rank {}, expected {dims:?} with rank {}",
            factors.dims(),
            factors.rank(),
            cfg.rank
        )));
    }
    if cfg.rank > *dims.iter().min().expect("three dims") {
        return Err(Error::InvalidParameter(format!(
            "rank {} exceeds the smallest dimension of {dims:?}",
            cfg.rank
        )));
    }
    if let Some(t) = truth {
        if t.rank() != cfg.rank || t.dims() != dims {
            return Err(mismatch(format!(
                "truth is {:?} with rank {}, expected {dims:?} with rank {}",
                t.dims(),
                t.rank(),
                cfg.rank
            )));
        }
    }
    if cfg.stop_metric == StopMetric::MseVsTruth && truth.is_none() {
        return Err(Error::InvalidParameter(
            "the mse_vs_truth stopping rule needs ground-truth factors".into(),
        ));
    }

    let unfolded: Vec<Array2<f64>> = (0..3)
        .map(|d| y.matricize(d).map(|m| m.matrix))
        .collect::<Result<_>>()?;
    let masks: Option<Vec<Array2<bool>>> = if mask.is_full() {
        None
    } else {
        Some((0..3).map(|d| mask.matricize(d)).collect::<Result<_>>()?)
    };

    let mut previous = evaluate(y, mask, &factors, modes, truth)?;
    let mut trace = Trace::default();
    let mut elapsed = Duration::ZERO;
    let mut stop_reason = StopReason::IterationCap;

    for k in 1..=cfg.max_outer {
        let started = Instant::now();
        for d in 0..3 {
            let w = factors.khatri_rao_except(d)?;
            let gram = match masks {
                None => Some(factors.gram_except(d)?),
                Some(_) => None,
            };
            let ctx = ModeContext {
                w: w.view(),
                yd: unfolded[d].view(),
                mask: masks.as_ref().map(|m| m[d].view()),
                gram,
            };
            solver.update(d, &mut factors, ctx)?;
        }
        elapsed += started.elapsed();

        let current = evaluate(y, mask, &factors, modes, truth)?;
        trace.push(TraceRow {
            outer_iter: k,
            elapsed_sec: elapsed.as_secs_f64(),
            objective: current.objective,
            mse_raw: current.mse.map(|m| m.0),
            mse_aligned: current.mse.map(|m| m.1),
        });

        let change = match cfg.stop_metric {
            StopMetric::MseVsTruth => {
                let (now, before) = (current.mse.expect("truth checked"), previous.mse.expect("truth checked"));
                (now.1 - before.1).abs()
            }
            StopMetric::ObjectiveRelChange => {
                (current.objective - previous.objective).abs()
                    / previous.objective.max(OBJECTIVE_EPS)
            }
        };
        previous = current;
        if change < cfg.stop_tol {
            stop_reason = StopReason::Converged;
            break;
        }
    }

    let outer_iterations = trace.len();
    let (state, stats) = solver.finish(factors);
    let fit = FitResult {
        factors: state.factors,
        duals: state.duals,
        aux: state.aux,
        trace,
        outer_iterations,
        stop_reason,
    };
    Ok((fit, stats))
}
