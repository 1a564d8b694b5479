//! Python bindings. Arrays cross the boundary as nested sequences: anything
//! iterable (lists, tuples, NumPy arrays) is accepted, and results come back
//! as nested lists.

use aopds::admm::{ao_admm_factorize_with_stats, AdmmConfig, RhoRule};
use aopds::bench::synthetic::{generate_synthetic as generate, SyntheticSpec};
use aopds::driver::{factorize as fit_pds, DriverConfig, FitResult as CoreFit, StopMetric, StopReason};
use aopds::operators::{LinOpKind, Projection, ProxFn};
use aopds::{model, FactorSet, Mask, ModeSpec as CoreSpec, Tensor3 as CoreTensor};
use ndarray::{Array2, ArrayView2};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: aopds::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn nested<'py, T: FromPyObjectOwned<'py>>(obj: &Bound<'py, PyAny>, depth: usize) -> PyResult<(Vec<usize>, Vec<T>)> {
    if depth == 0 {
        return Ok((Vec::new(), vec![obj.extract::<T>().map_err(Into::into)?]));
    }
    let mut shape: Option<Vec<usize>> = None;
    let mut values = Vec::new();
    let mut count = 0;
    for item in obj.try_iter()? {
        let (s, v) = nested::<T>(&item?, depth - 1)?;
        match &shape {
            None => shape = Some(s),
            Some(prev) if *prev != s => return Err(PyValueError::new_err("ragged nested sequence")),
            Some(_) => {}
        }
        values.extend(v);
        count += 1;
    }
    let mut full = vec![count];
    full.extend(shape.unwrap_or_else(|| vec![0; depth - 1]));
    Ok((full, values))
}

fn matrix(obj: &Bound<'_, PyAny>) -> PyResult<Array2<f64>> {
    let (shape, values) = nested::<f64>(obj, 2)?;
    Array2::from_shape_vec((shape[0], shape[1]), values).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn dims3(shape: &[usize]) -> [usize; 3] {
    [shape[0], shape[1], shape[2]]
}

fn rows(m: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn factor_set(obj: &Bound<'_, PyAny>) -> PyResult<FactorSet> {
    let mats: Vec<Array2<f64>> = obj.try_iter()?.map(|m| matrix(&m?)).collect::<PyResult<_>>()?;
    let arr: [Array2<f64>; 3] = mats
        .try_into()
        .map_err(|v: Vec<_>| PyValueError::new_err(format!("expected 3 factor matrices, got {}", v.len())))?;
    FactorSet::new(arr).map_err(err)
}

fn factor_lists(f: &FactorSet) -> Vec<Vec<Vec<f64>>> {
    f.factors().iter().map(|m| rows(m.view())).collect()
}

fn mask_from(obj: Option<&Bound<'_, PyAny>>, dims: [usize; 3]) -> PyResult<Mask> {
    match obj {
        None => Mask::all(dims).map_err(err),
        Some(o) => {
            let (shape, keep) = nested::<bool>(o, 3)?;
            if dims3(&shape) != dims {
                return Err(PyValueError::new_err(format!("mask shape {shape:?} does not match tensor {dims:?}")));
            }
            Mask::from_vec(dims, keep).map_err(err)
        }
    }
}

/// Dense third-order tensor.
#[pyclass(name = "Tensor3", module = "aopds_py", frozen)]
struct PyTensor3 {
    inner: CoreTensor,
}

#[pymethods]
impl PyTensor3 {
    /// Builds from a nested `I x J x K` sequence.
    #[new]
    fn new(data: &Bound<'_, PyAny>) -> PyResult<Self> {
        let (shape, values) = nested::<f64>(data, 3)?;
        let inner = CoreTensor::from_vec(dims3(&shape), values).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let [i, j, k] = self.inner.dims();
        (i, j, k)
    }

    fn get(&self, i: usize, j: usize, k: usize) -> PyResult<f64> {
        let [a, b, c] = self.inner.dims();
        if i >= a || j >= b || k >= c {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.get(i, j, k))
    }

    fn norm_sq(&self) -> f64 {
        self.inner.norm_sq()
    }

    /// Mode-`mode` unfolding as a list of rows.
    fn unfold(&self, mode: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(self.inner.matricize(mode).map_err(err)?.matrix.view()))
    }

    fn masked(&self, mask: &Bound<'_, PyAny>) -> PyResult<Self> {
        let m = mask_from(Some(mask), self.inner.dims())?;
        Ok(Self { inner: m.apply(&self.inner).map_err(err)? })
    }

    fn tolist(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.view().outer_iter().map(|s| rows(s)).collect()
    }

    fn __repr__(&self) -> String {
        let [i, j, k] = self.inner.dims();
        format!("Tensor3(dims=({i}, {j}, {k}))")
    }
}

fn projection(kind: &str, lo: Option<f64>, hi: Option<f64>) -> PyResult<Projection> {
    match kind {
        "none" => Ok(Projection::None),
        "nonnegative" => Ok(Projection::Nonnegative),
        "box" => match (lo, hi) {
            (Some(lo), Some(hi)) => Ok(Projection::Box { lo, hi }),
            _ => Err(PyValueError::new_err("box projection needs lo and hi")),
        },
        other => Err(PyValueError::new_err(format!("unknown projection {other:?}"))),
    }
}

fn regularizer(kind: &str, weight: f64, groups: Option<Vec<Vec<usize>>>) -> PyResult<ProxFn> {
    match kind {
        "zero" => Ok(ProxFn::Zero),
        "l1" => Ok(ProxFn::l1(weight)),
        "squared_frobenius" => Ok(ProxFn::squared_frobenius(weight)),
        "group_l2" => ProxFn::group_l2(weight, groups.unwrap_or_default()).map_err(err),
        other => Err(PyValueError::new_err(format!("unknown regularizer {other:?}"))),
    }
}

fn operator(kind: &str, blocks: Option<Vec<Vec<usize>>>) -> PyResult<LinOpKind> {
    match kind {
        "identity" => Ok(LinOpKind::Identity),
        "row_difference" => Ok(LinOpKind::RowDifference),
        "group_replicate" => Ok(LinOpKind::GroupReplicate {
            blocks: blocks.ok_or_else(|| PyValueError::new_err("group_replicate needs blocks"))?,
        }),
        other => Err(PyValueError::new_err(format!("unknown operator {other:?}"))),
    }
}

/// Constraint set, regularizer and operator for one mode.
#[pyclass(name = "ModeSpec", module = "aopds_py", frozen)]
struct PyModeSpec {
    inner: CoreSpec,
}

#[pymethods]
impl PyModeSpec {
    #[new]
    #[pyo3(signature = (projection="none", regularizer="zero", weight=0.0, operator="identity", lo=None, hi=None, groups=None, blocks=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        projection: &str,
        regularizer: &str,
        weight: f64,
        operator: &str,
        lo: Option<f64>,
        hi: Option<f64>,
        groups: Option<Vec<Vec<usize>>>,
        blocks: Option<Vec<Vec<usize>>>,
    ) -> PyResult<Self> {
        let mut spec = CoreSpec::unconstrained().with_projection(self::projection(projection, lo, hi)?);
        let reg = self::regularizer(regularizer, weight, groups)?;
        if !reg.is_zero() || operator != "identity" {
            spec = spec.with_regularizer(reg, self::operator(operator, blocks)?);
        }
        spec.validate().map_err(err)?;
        Ok(Self { inner: spec })
    }

    /// Nonnegative modes with l1 on mode 0 and squared Frobenius on modes 1, 2.
    #[staticmethod]
    #[pyo3(signature = (l1=5.0, frobenius=2.0))]
    fn benchmark(l1: f64, frobenius: f64) -> Vec<PyModeSpec> {
        model::benchmark_modes(l1, frobenius).into_iter().map(|inner| PyModeSpec { inner }).collect()
    }

    #[getter]
    fn projection(&self) -> &'static str {
        self.inner.projection.name()
    }

    #[getter]
    fn regularizer(&self) -> &'static str {
        self.inner.regularizer.name()
    }

    #[getter]
    fn weight(&self) -> f64 {
        self.inner.regularizer.weight()
    }

    #[getter]
    fn operator(&self) -> &'static str {
        self.inner.operator.as_ref().map_or("identity", LinOpKind::name)
    }

    fn __repr__(&self) -> String {
        format!(
            "ModeSpec(projection={:?}, regularizer={:?}, weight={}, operator={:?})",
            self.projection(),
            self.regularizer(),
            self.weight(),
            self.operator()
        )
    }
}

fn specs(modes: Option<Vec<PyRef<'_, PyModeSpec>>>) -> PyResult<[CoreSpec; 3]> {
    match modes {
        None => Ok([CoreSpec::unconstrained(), CoreSpec::unconstrained(), CoreSpec::unconstrained()]),
        Some(m) if m.len() == 3 => Ok([m[0].inner.clone(), m[1].inner.clone(), m[2].inner.clone()]),
        Some(m) => Err(PyValueError::new_err(format!("expected 3 mode specs, got {}", m.len()))),
    }
}

/// Output of `factorize` and `ao_admm`.
#[pyclass(name = "FitResult", module = "aopds_py", frozen)]
struct PyFitResult {
    fit: CoreFit,
    #[pyo3(get)]
    cholesky_factorizations: Option<usize>,
}

#[pymethods]
impl PyFitResult {
    /// Factor matrices `[F_0, F_1, F_2]`, each `N_d x R`.
    #[getter]
    fn factors(&self) -> Vec<Vec<Vec<f64>>> {
        factor_lists(&self.fit.factors)
    }

    #[getter]
    fn outer_iterations(&self) -> usize {
        self.fit.outer_iterations
    }

    #[getter]
    fn stop_reason(&self) -> &'static str {
        match self.fit.stop_reason {
            StopReason::Converged => "converged",
            StopReason::IterationCap => "iteration_cap",
        }
    }

    /// One dict per outer iteration.
    #[getter]
    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.fit
            .trace
            .rows
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("outer_iter", r.outer_iter)?;
                d.set_item("elapsed_sec", r.elapsed_sec)?;
                d.set_item("objective", r.objective)?;
                d.set_item("mse_raw", r.mse_raw)?;
                d.set_item("mse_aligned", r.mse_aligned)?;
                Ok(d)
            })
            .collect()
    }

    fn reconstruct(&self) -> PyTensor3 {
        PyTensor3 { inner: aopds::cp_reconstruct(&self.fit.factors) }
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(outer_iterations={}, stop_reason={:?})",
            self.fit.outer_iterations,
            self.stop_reason()
        )
    }
}

fn stop_metric(name: &str) -> PyResult<StopMetric> {
    match name {
        "objective_rel_change" => Ok(StopMetric::ObjectiveRelChange),
        "mse_vs_truth" => Ok(StopMetric::MseVsTruth),
        other => Err(PyValueError::new_err(format!("unknown stop metric {other:?}"))),
    }
}

struct Problem {
    mask: Mask,
    specs: [CoreSpec; 3],
    truth: Option<FactorSet>,
    cfg: DriverConfig,
}

#[allow(clippy::too_many_arguments)]
fn problem(
    y: &PyTensor3,
    rank: usize,
    modes: Option<Vec<PyRef<'_, PyModeSpec>>>,
    mask: Option<&Bound<'_, PyAny>>,
    truth: Option<&Bound<'_, PyAny>>,
    n_inner: usize,
    max_outer: usize,
    stop_tol: f64,
    stop_metric: &str,
    seed: u64,
) -> PyResult<Problem> {
    Ok(Problem {
        mask: mask_from(mask, y.inner.dims())?,
        specs: specs(modes)?,
        truth: truth.map(factor_set).transpose()?,
        cfg: DriverConfig {
            n_inner,
            max_outer,
            stop_tol,
            stop_metric: self::stop_metric(stop_metric)?,
            seed,
            ..DriverConfig::new(rank)
        },
    })
}

/// Fits a rank-`rank` CP model by AO-PDS.
#[pyfunction]
#[pyo3(signature = (y, rank, modes=None, mask=None, truth=None, n_inner=5, max_outer=1000, stop_tol=1e-5, stop_metric="objective_rel_change", seed=0))]
#[allow(clippy::too_many_arguments)]
fn factorize(
    py: Python<'_>,
    y: &PyTensor3,
    rank: usize,
    modes: Option<Vec<PyRef<'_, PyModeSpec>>>,
    mask: Option<&Bound<'_, PyAny>>,
    truth: Option<&Bound<'_, PyAny>>,
    n_inner: usize,
    max_outer: usize,
    stop_tol: f64,
    stop_metric: &str,
    seed: u64,
) -> PyResult<PyFitResult> {
    let p = problem(y, rank, modes, mask, truth, n_inner, max_outer, stop_tol, stop_metric, seed)?;
    let fit = py
        .detach(|| fit_pds(&y.inner, &p.mask, &p.specs, &p.cfg, p.truth.as_ref()))
        .map_err(err)?;
    Ok(PyFitResult { fit, cholesky_factorizations: None })
}

/// Fits a rank-`rank` CP model by the AO-ADMM baseline. `rho=None` uses
/// `trace(W^T W) / R` per mode visit.
#[pyfunction]
#[pyo3(signature = (y, rank, modes=None, mask=None, truth=None, n_inner=5, max_outer=1000, stop_tol=1e-5, stop_metric="objective_rel_change", seed=0, rho=None))]
#[allow(clippy::too_many_arguments)]
fn ao_admm(
    py: Python<'_>,
    y: &PyTensor3,
    rank: usize,
    modes: Option<Vec<PyRef<'_, PyModeSpec>>>,
    mask: Option<&Bound<'_, PyAny>>,
    truth: Option<&Bound<'_, PyAny>>,
    n_inner: usize,
    max_outer: usize,
    stop_tol: f64,
    stop_metric: &str,
    seed: u64,
    rho: Option<f64>,
) -> PyResult<PyFitResult> {
    let p = problem(y, rank, modes, mask, truth, n_inner, max_outer, stop_tol, stop_metric, seed)?;
    let admm = AdmmConfig {
        rho: rho.map_or(RhoRule::TraceOverRank, |value| RhoRule::Fixed { value }),
    };
    let (fit, stats) = py
        .detach(|| ao_admm_factorize_with_stats(&y.inner, &p.mask, &p.specs, &p.cfg, &admm, p.truth.as_ref()))
        .map_err(err)?;
    Ok(PyFitResult { fit, cholesky_factorizations: Some(stats.cholesky_factorizations) })
}

/// Returns `(y, mask, truth)`: the noisy tensor, the observation mask as
/// nested bools and the ground-truth factors.
#[pyfunction]
#[pyo3(signature = (dims=(100, 100, 100), rank=10, sparse_mode=0, sparsity=0.8, noise_sigma=0.1, seed=0))]
#[allow(clippy::type_complexity)]
fn generate_synthetic(
    dims: (usize, usize, usize),
    rank: usize,
    sparse_mode: usize,
    sparsity: f64,
    noise_sigma: f64,
    seed: u64,
) -> PyResult<(PyTensor3, Vec<Vec<Vec<bool>>>, Vec<Vec<Vec<f64>>>)> {
    let spec = SyntheticSpec {
        dims: [dims.0, dims.1, dims.2],
        rank,
        sparse_mode,
        sparsity,
        noise_sigma,
        seed,
    };
    let data = generate(&spec).map_err(err)?;
    let keep = data.mask.as_slice();
    let mask = (0..dims.0)
        .map(|i| {
            (0..dims.1)
                .map(|j| keep[(i * dims.1 + j) * dims.2..][..dims.2].to_vec())
                .collect()
        })
        .collect();
    Ok((PyTensor3 { inner: data.y }, mask, factor_lists(&data.truth)))
}

/// Khatri-Rao product; the second factor's row index varies fastest.
#[pyfunction]
fn khatri_rao(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>) -> PyResult<Vec<Vec<f64>>> {
    let kr = aopds::khatri_rao(matrix(a)?.view(), matrix(b)?.view()).map_err(err)?;
    Ok(rows(kr.view()))
}

/// Inverse of `Tensor3.unfold`.
#[pyfunction]
fn tensorize(matrix: &Bound<'_, PyAny>, mode: usize, dims: (usize, usize, usize)) -> PyResult<PyTensor3> {
    let m = self::matrix(matrix)?;
    let inner = aopds::tensorize(m.view(), mode, [dims.0, dims.1, dims.2]).map_err(err)?;
    Ok(PyTensor3 { inner })
}

/// CP tensor `[[F_0, F_1, F_2]]`.
#[pyfunction]
fn cp_reconstruct(factors: &Bound<'_, PyAny>) -> PyResult<PyTensor3> {
    Ok(PyTensor3 { inner: aopds::cp_reconstruct(&factor_set(factors)?) })
}

/// Factor MSE against ground truth, optionally after column alignment.
#[pyfunction]
#[pyo3(signature = (factors, truth, aligned=true))]
fn mse(factors: &Bound<'_, PyAny>, truth: &Bound<'_, PyAny>, aligned: bool) -> PyResult<f64> {
    aopds::metrics::mse(&factor_set(factors)?, &factor_set(truth)?, aligned).map_err(err)
}

/// Masked least-squares loss plus every mode's penalty.
#[pyfunction]
#[pyo3(signature = (y, factors, modes=None, mask=None))]
fn objective(
    y: &PyTensor3,
    factors: &Bound<'_, PyAny>,
    modes: Option<Vec<PyRef<'_, PyModeSpec>>>,
    mask: Option<&Bound<'_, PyAny>>,
) -> PyResult<f64> {
    let m = mask_from(mask, y.inner.dims())?;
    aopds::objective(&y.inner, &m, &factor_set(factors)?, &specs(modes)?).map_err(err)
}

#[pymodule]
fn aopds_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor3>()?;
    m.add_class::<PyModeSpec>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(factorize, m)?)?;
    m.add_function(wrap_pyfunction!(ao_admm, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(khatri_rao, m)?)?;
    m.add_function(wrap_pyfunction!(tensorize, m)?)?;
    m.add_function(wrap_pyfunction!(cp_reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    Ok(())
}
