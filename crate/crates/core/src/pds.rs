//! Primal-dual splitting solver for the per-mode subproblem
//!
//! ```text
//! min_F 1/2 ||Y_(d) - M(W F)||_F^2 + h(L(F))   s.t. F ∈ C
//! ```
//!
//! with `F = F_d^T` (shape `R x N_d`) and `W` the Khatri-Rao product of the
//! other two factors. One inner iteration is
//!
//! ```text
//! F+ = P_C(F - g1 (grad f(F) + L^*(G)))
//! G  = G + g2 L(2 F+ - F)
//! G+ = G - g2 prox_{h / g2}(G / g2)
//! ```

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{mismatch, Error, Result};
use crate::model::BoundMode;
use crate::tensor::matrix_norm_sq;

/// Step sizes `gamma1 = 0.99 * 2 / trace(W^T W)` and
/// `gamma2 = 1 / (gamma1 ||L^*L||) - trace(W^T W) / (2 ||L^*L||)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub gamma1: f64,
    /// Zero when there is no operator; the dual update is then skipped.
    pub gamma2: f64,
    pub trace_bound: f64,
    pub op_norm: f64,
}

impl StepSizes {
    /// `gamma1 * (trace_bound / 2 + gamma2 * op_norm)`.
    pub fn inequality_lhs(&self) -> f64 {
        self.gamma1 * (self.trace_bound / 2.0 + self.gamma2 * self.op_norm)
    }

    pub fn dual_enabled(&self) -> bool {
        self.op_norm > 0.0
    }
}

pub fn compute_stepsizes(trace_bound: f64, op_norm: f64) -> Result<StepSizes> {
    if !(trace_bound > 0.0 && trace_bound.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "trace bound must be positive and finite, got {trace_bound}"
        )));
    }
    if !(op_norm >= 0.0 && op_norm.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "operator norm must be nonnegative and finite, got {op_norm}"
        )));
    }
    let gamma1 = 0.99 * 2.0 / trace_bound;
    let gamma2 = if op_norm > 0.0 {
        1.0 / (gamma1 * op_norm) - trace_bound / (2.0 * op_norm)
    } else {
        0.0
    };
    Ok(StepSizes {
        gamma1,
        gamma2,
        trace_bound,
        op_norm,
    })
}

fn check_shapes(
    f: (usize, usize),
    w: ArrayView2<'_, f64>,
    yd: ArrayView2<'_, f64>,
    mask: Option<ArrayView2<'_, bool>>,
) -> Result<()> {
    let (rank, n) = f;
    if w.ncols() != rank {
        return Err(mismatch(format!(
            "W has {} columns but F has {rank} rows",
            w.ncols()
        )));
    }
    if yd.dim() != (w.nrows(), n) {
        return Err(mismatch(format!(
            "unfolded data must be {:?}, got {:?}",
            (w.nrows(), n),
            yd.dim()
        )));
    }
    if let Some(m) = mask {
        if m.dim() != yd.dim() {
            return Err(mismatch(format!(
                "unfolded mask must be {:?}, got {:?}",
                yd.dim(),
                m.dim()
            )));
        }
    }
    Ok(())
}

/// `W^T (M ⊙ (W F) - Y_(d))`; without a mask this is `W^T W F - W^T Y_(d)`.
pub fn subproblem_gradient(
    f: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    yd: ArrayView2<'_, f64>,
    mask: Option<ArrayView2<'_, bool>>,
) -> Result<Array2<f64>> {
    check_shapes(f.dim(), w, yd, mask)?;
    match mask {
        None => {
            let gram = w.t().dot(&w);
            let rhs = w.t().dot(&yd);
            Ok(gram.dot(&f) - rhs)
        }
        Some(m) => Ok(masked_gradient(f, w, yd, m)),
    }
}

fn masked_gradient(
    f: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    yd: ArrayView2<'_, f64>,
    mask: ArrayView2<'_, bool>,
) -> Array2<f64> {
    let mut residual = w.dot(&f);
    Zip::from(&mut residual)
        .and(mask)
        .and(yd)
        .for_each(|r, &keep, &y| *r = if keep { *r - y } else { -y });
    w.t().dot(&residual)
}

/// The smooth term `1/2 ||Y_(d) - M(W F)||^2` of one subproblem, with the
/// pieces the solver reuses across inner iterations.
#[derive(Debug, Clone)]
pub struct QuadraticLoss<'a> {
    w: ArrayView2<'a, f64>,
    yd: ArrayView2<'a, f64>,
    mask: Option<ArrayView2<'a, bool>>,
    /// `A = W^T W`, unmasked path only.
    gram: Option<Array2<f64>>,
    /// `B = W^T Y_(d)`.
    rhs: Array2<f64>,
    trace_bound: f64,
}

impl<'a> QuadraticLoss<'a> {
    pub fn new(
        w: ArrayView2<'a, f64>,
        yd: ArrayView2<'a, f64>,
        mask: Option<ArrayView2<'a, bool>>,
    ) -> Result<Self> {
        let gram = match mask {
            None => Some(w.t().dot(&w)),
            Some(_) => None,
        };
        Self::build(w, yd, mask, gram)
    }

    /// Unmasked loss with a precomputed Gram matrix `W^T W`.
    pub fn with_gram(
        w: ArrayView2<'a, f64>,
        yd: ArrayView2<'a, f64>,
        gram: Array2<f64>,
    ) -> Result<Self> {
        let rank = w.ncols();
        if gram.dim() != (rank, rank) {
            return Err(mismatch(format!(
                "Gram matrix must be {rank}x{rank}, got {:?}",
                gram.dim()
            )));
        }
        Self::build(w, yd, None, Some(gram))
    }

    fn build(
        w: ArrayView2<'a, f64>,
        yd: ArrayView2<'a, f64>,
        mask: Option<ArrayView2<'a, bool>>,
        gram: Option<Array2<f64>>,
    ) -> Result<Self> {
        check_shapes((w.ncols(), yd.ncols()), w, yd, mask)?;
        let trace_bound = match &gram {
            Some(g) => g.diag().sum(),
            None => matrix_norm_sq(w),
        };
        let rhs = w.t().dot(&yd);
        Ok(Self {
            w,
            yd,
            mask,
            gram,
            rhs,
            trace_bound,
        })
    }

    /// Shape `(R, N_d)` of the variable.
    pub fn variable_shape(&self) -> (usize, usize) {
        (self.w.ncols(), self.yd.ncols())
    }

    /// `trace(W^T W)`, an upper bound on the Lipschitz constant.
    pub fn trace_bound(&self) -> f64 {
        self.trace_bound
    }

    pub fn gram(&self) -> Option<&Array2<f64>> {
        self.gram.as_ref()
    }

    pub fn rhs(&self) -> &Array2<f64> {
        &self.rhs
    }

    pub fn is_masked(&self) -> bool {
        self.mask.is_some()
    }

    pub fn gradient(&self, f: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if f.dim() != self.variable_shape() {
            return Err(mismatch(format!(
                "variable must be {:?}, got {:?}",
                self.variable_shape(),
                f.dim()
            )));
        }
        Ok(match (&self.gram, self.mask) {
            (Some(gram), _) => gram.dot(&f) - &self.rhs,
            (None, Some(mask)) => masked_gradient(f, self.w, self.yd, mask),
            (None, None) => unreachable!("unmasked loss always carries a Gram matrix"),
        })
    }

    pub fn value(&self, f: ArrayView2<'_, f64>) -> f64 {
        let fitted = self.w.dot(&f);
        let mut total = 0.0;
        for ((idx, &y), &p) in self.yd.indexed_iter().zip(fitted.iter()) {
            let keep = self.mask.is_none_or(|m| m[idx]);
            let r = if keep { y - p } else { y };
            total += r * r;
        }
        0.5 * total
    }
}

/// Primal `F` and dual `G` carried between inner solves.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemState {
    pub primal: Array2<f64>,
    /// Shape of `L`'s output; `R x 0` when the mode has no regularizer.
    pub dual: Array2<f64>,
}

impl SubproblemState {
    pub fn new(primal: Array2<f64>, mode: &BoundMode) -> Self {
        let dual_shape = match &mode.operator {
            Some(op) => op.output_shape(),
            None => (primal.nrows(), 0),
        };
        Self {
            primal,
            dual: Array2::zeros(dual_shape),
        }
    }
}

/// Runs exactly `n_inner` primal-dual iterations from `state`.
pub fn solve_subproblem(
    state: SubproblemState,
    mode: &BoundMode,
    loss: &QuadraticLoss<'_>,
    steps: &StepSizes,
    n_inner: usize,
) -> Result<SubproblemState> {
    if n_inner == 0 {
        return Err(Error::InvalidParameter("n_inner must be at least 1".into()));
    }
    let SubproblemState {
        primal: mut f,
        dual: mut g,
    } = state;
    if f.dim() != loss.variable_shape() {
        return Err(mismatch(format!(
            "primal must be {:?}, got {:?}",
            loss.variable_shape(),
            f.dim()
        )));
    }
    let dual_op = mode.operator.as_ref().filter(|_| steps.dual_enabled());
    if let Some(op) = dual_op {
        if g.dim() != op.output_shape() {
            return Err(mismatch(format!(
                "dual must be {:?}, got {:?}",
                op.output_shape(),
                g.dim()
            )));
        }
    }
    let gamma1 = steps.gamma1;
    let gamma2 = steps.gamma2;

    for _ in 0..n_inner {
        let mut step = loss.gradient(f.view())?;
        if let Some(op) = dual_op {
            step += &op.adjoint(g.view())?;
        }
        let mut next = f.clone();
        next.scaled_add(-gamma1, &step);
        mode.projection.project_in_place(&mut next);

        if let Some(op) = dual_op {
            let mut extrapolated = next.clone();
            Zip::from(&mut extrapolated)
                .and(&f)
                .for_each(|e, &old| *e = 2.0 * *e - old);
            g.scaled_add(gamma2, &op.forward(extrapolated.view())?);
            g = mode.regularizer.prox_conjugate(g.view(), gamma2)?;
        }
        f = next;

        if f.iter().chain(g.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("primal-dual iteration"));
        }
    }
    Ok(SubproblemState { primal: f, dual: g })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModeSpec;
    use crate::operators::{LinOpKind, ProxFn};
    use crate::rng::SeededStream;
    use ndarray::array;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut s = SeededStream::new(seed);
        Array2::from_shape_fn((rows, cols), |_| s.uniform())
    }

    #[test]
    fn default_stepsizes() {
        let s = compute_stepsizes(2.0, 1.0).unwrap();
        assert!((s.gamma1 - 0.99).abs() < 1e-15);
        assert!((s.gamma2 - (1.0 / 0.99 - 1.0)).abs() < 1e-15);
        assert!((s.gamma2 - 0.010101).abs() < 1e-6);
    }

    #[test]
    fn zero_operator_disables_dual() {
        let s = compute_stepsizes(3.0, 0.0).unwrap();
        assert_eq!(s.gamma2, 0.0);
        assert!(!s.dual_enabled());
        assert!((s.inequality_lhs() - 0.99).abs() < 1e-15);
    }

    #[test]
    fn stepsize_rule_saturates_trace_bound() {
        // gamma1 * gamma2 * op_norm = 1 - gamma1 * trace / 2
        for (t, op) in [(2.0, 1.0), (17.3, 4.0), (1e4, 2.0)] {
            let s = compute_stepsizes(t, op).unwrap();
            assert!((s.inequality_lhs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stepsize_errors() {
        assert!(compute_stepsizes(0.0, 1.0).is_err());
        assert!(compute_stepsizes(-1.0, 1.0).is_err());
        assert!(compute_stepsizes(1.0, -1.0).is_err());
    }

    #[test]
    fn gradient_vanishes_at_least_squares_solution() {
        // W = [[1,0],[0,1],[1,1]], F solves W^T W F = W^T Y
        let w = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let y = array![[1.0], [2.0], [4.0]];
        // normal equations: [[2,1],[1,2]] F = [5, 6]  =>  F = [4/3, 7/3]
        let f = array![[4.0 / 3.0], [7.0 / 3.0]];
        let g = subproblem_gradient(f.view(), w.view(), y.view(), None).unwrap();
        assert!(g.iter().all(|v| v.abs() <= 1e-9));
    }

    #[test]
    fn full_mask_matches_unmasked() {
        let w = random(12, 3, 1);
        let y = random(12, 5, 2);
        let f = random(3, 5, 3);
        let mask = Array2::from_elem((12, 5), true);
        let a = subproblem_gradient(f.view(), w.view(), y.view(), None).unwrap();
        let b = subproblem_gradient(f.view(), w.view(), y.view(), Some(mask.view())).unwrap();
        for (x, z) in a.iter().zip(b.iter()) {
            assert!((x - z).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn gradient_shape_errors() {
        let w = random(6, 2, 1);
        let y = random(6, 3, 2);
        assert!(subproblem_gradient(random(3, 3, 3).view(), w.view(), y.view(), None).is_err());
        assert!(subproblem_gradient(random(2, 3, 3).view(), w.view(), random(5, 3, 1).view(), None).is_err());
    }

    #[test]
    fn zero_inner_iterations_rejected() {
        let w = random(10, 3, 4);
        let y = random(10, 8, 5);
        let loss = QuadraticLoss::new(w.view(), y.view(), None).unwrap();
        let mode = ModeSpec::nonnegative().bind(3, 8).unwrap();
        let steps = compute_stepsizes(loss.trace_bound(), mode.op_norm()).unwrap();
        let state = SubproblemState::new(random(3, 8, 6), &mode);
        assert!(solve_subproblem(state.clone(), &mode, &loss, &steps, 0).is_err());
        let one = solve_subproblem(state.clone(), &mode, &loss, &steps, 1).unwrap();
        assert_ne!(one.primal, state.primal);
    }

    #[test]
    fn iterates_stay_feasible() {
        let w = random(10, 3, 7);
        let y = random(10, 8, 8).mapv(|v| v - 0.8);
        let loss = QuadraticLoss::new(w.view(), y.view(), None).unwrap();
        let mode = ModeSpec::nonnegative()
            .with_regularizer(ProxFn::l1(0.3), LinOpKind::RowDifference)
            .bind(3, 8)
            .unwrap();
        let steps = compute_stepsizes(loss.trace_bound(), mode.op_norm()).unwrap();
        let mut state = SubproblemState::new(random(3, 8, 9), &mode);
        assert_eq!(state.dual.dim(), (3, 7));
        for _ in 0..20 {
            state = solve_subproblem(state, &mode, &loss, &steps, 1).unwrap();
            assert!(state.primal.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn deterministic_warm_start() {
        let w = random(10, 3, 10);
        let y = random(10, 8, 11);
        let loss = QuadraticLoss::new(w.view(), y.view(), None).unwrap();
        let mode = ModeSpec::nonnegative()
            .with_regularizer(ProxFn::l1(0.5), LinOpKind::Identity)
            .bind(3, 8)
            .unwrap();
        let steps = compute_stepsizes(loss.trace_bound(), mode.op_norm()).unwrap();
        let state = SubproblemState::new(random(3, 8, 12), &mode);
        let a = solve_subproblem(state.clone(), &mode, &loss, &steps, 7).unwrap();
        let b = solve_subproblem(state, &mode, &loss, &steps, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_bound_routes_agree() {
        let w = random(30, 4, 13);
        let y = random(30, 2, 14);
        let a = QuadraticLoss::new(w.view(), y.view(), None).unwrap();
        let m = Array2::from_elem((30, 2), true);
        let b = QuadraticLoss::new(w.view(), y.view(), Some(m.view())).unwrap();
        assert!((a.trace_bound() - b.trace_bound()).abs() <= 1e-10 * a.trace_bound());
    }
}
