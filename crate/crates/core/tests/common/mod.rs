#![allow(dead_code)]

use aopds::rng::SeededStream;
use aopds::{FactorSet, Tensor3};
use ndarray::Array2;

pub fn gaussian(rows: usize, cols: usize, stream: &mut SeededStream) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| stream.standard_normal())
}

pub fn uniform(rows: usize, cols: usize, stream: &mut SeededStream) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| stream.uniform())
}

pub fn random_factors(dims: [usize; 3], rank: usize, seed: u64) -> FactorSet {
    let mut s = SeededStream::new(seed);
    FactorSet::new(dims.map(|n| gaussian(n, rank, &mut s))).unwrap()
}

pub fn random_tensor(dims: [usize; 3], seed: u64) -> Tensor3 {
    let mut s = SeededStream::new(seed);
    let n = dims.iter().product();
    Tensor3::from_vec(dims, (0..n).map(|_| s.standard_normal()).collect()).unwrap()
}

pub fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn rel_err(got: &Array2<f64>, want: &Array2<f64>) -> f64 {
    frob(&(got - want)) / frob(want).max(f64::MIN_POSITIVE)
}

use aopds::model::BoundMode;
use aopds::operators::{Projection, ProxFn};
use nalgebra::DMatrix;

/// Largest eigenvalue of `W^T W`.
pub fn lipschitz(w: &Array2<f64>) -> f64 {
    let g = w.t().dot(w);
    let m = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[[i, j]]);
    m.symmetric_eigen().eigenvalues.iter().cloned().fold(0.0, f64::max)
}

/// Proximal gradient on `1/2 ||Yd - W F||^2 + h(F)` over `C`, for entrywise
/// `h`, run until the gradient-mapping norm is below `tol`.
pub fn prox_gradient_oracle(
    w: &Array2<f64>,
    yd: &Array2<f64>,
    reg: &ProxFn,
    proj: &Projection,
    tol: f64,
) -> Array2<f64> {
    let lip = lipschitz(w);
    let step = 1.0 / lip;
    let gram = w.t().dot(w);
    let rhs = w.t().dot(yd);
    let mut f = Array2::<f64>::zeros((w.ncols(), yd.ncols()));
    for _ in 0..10_000_000 {
        let grad = gram.dot(&f) - &rhs;
        let mut next = reg.prox((&f - &grad.mapv(|g| step * g)).view(), step).unwrap();
        proj.project_in_place(&mut next);
        let moved = frob(&(&next - &f)) * lip;
        f = next;
        if moved <= tol {
            return f;
        }
    }
    panic!("oracle did not reach stationarity {tol}");
}

/// `1/2 ||Yd - W F||^2 + h(F)` with identity operator.
pub fn composite_objective(w: &Array2<f64>, yd: &Array2<f64>, mode: &BoundMode, f: &Array2<f64>) -> f64 {
    let r = yd - &w.dot(f);
    0.5 * r.iter().map(|x| x * x).sum::<f64>() + mode.penalty(f.view()).unwrap()
}
