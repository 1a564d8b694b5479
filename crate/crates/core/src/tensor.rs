//! Dense third-order tensors and the multilinear primitives used by the
//! factorization code.
//!
//! Storage is row-major (last index fastest). Modes are indexed `0..3`.
//!
//! The mode-`d` matricization has shape `(prod_{i != d} N_i) x N_d`; its rows
//! are ordered so that, for `X = [[F_0, F_1, F_2]]`,
//!
//! ```text
//! X_(d) = (F_a ⊙ F_b) F_d^T      with a < b, {a, b} = {0, 1, 2} \ {d}
//! ```
//!
//! where `⊙` is the Khatri-Rao product with the second factor's row index
//! varying fastest.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};

use crate::error::{mismatch, Error, Result};

pub type Dims = [usize; 3];

/// Axis permutation that brings mode `d` last while keeping the other two in
/// ascending order.
const UNFOLD_AXES: [[usize; 3]; 3] = [[1, 2, 0], [0, 2, 1], [0, 1, 2]];
/// Inverse of [`UNFOLD_AXES`].
const FOLD_AXES: [[usize; 3]; 3] = [[2, 0, 1], [0, 2, 1], [0, 1, 2]];

pub(crate) fn check_mode(mode: usize) -> Result<()> {
    if mode < 3 {
        Ok(())
    } else {
        Err(Error::InvalidMode(mode))
    }
}

/// The two modes other than `mode`, ascending.
pub fn other_modes(mode: usize) -> [usize; 2] {
    match mode {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

fn unfold<T: Clone>(data: ArrayView3<'_, T>, mode: usize) -> Array2<T> {
    let dims = data.dim();
    let dims = [dims.0, dims.1, dims.2];
    let [a, b] = other_modes(mode);
    let permuted = data.permuted_axes(UNFOLD_AXES[mode]);
    let owned = permuted.as_standard_layout().into_owned();
    owned
        .into_shape_with_order((dims[a] * dims[b], dims[mode]))
        .expect("standard layout reshape")
}

fn fold<T: Clone>(matrix: ArrayView2<'_, T>, mode: usize, dims: Dims) -> Array3<T> {
    let [a, b] = other_modes(mode);
    let owned = matrix.as_standard_layout().into_owned();
    let cube = owned
        .into_shape_with_order((dims[a], dims[b], dims[mode]))
        .expect("standard layout reshape");
    cube.permuted_axes(FOLD_AXES[mode])
        .as_standard_layout()
        .into_owned()
}

fn check_dims(dims: Dims) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidParameter(format!(
            "tensor dimensions must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// Dense real tensor of order three.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    data: Array3<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: Dims) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            data: Array3::zeros((dims[0], dims[1], dims[2])),
        })
    }

    /// Builds a tensor from row-major data.
    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(mismatch(format!(
                "tensor of dims {dims:?} needs {expected} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tensor data"));
        }
        let data = Array3::from_shape_vec((dims[0], dims[1], dims[2]), data)
            .expect("length checked above");
        Ok(Self { data })
    }

    pub fn from_array(data: Array3<f64>) -> Result<Self> {
        let (a, b, c) = data.dim();
        check_dims([a, b, c])?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tensor data"));
        }
        Ok(Self {
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn dims(&self) -> Dims {
        let (a, b, c) = self.data.dim();
        [a, b, c]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn view(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("tensor storage is standard layout")
    }

    pub fn into_array(self) -> Array3<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[[i, j, k]]
    }

    pub fn norm_sq(&self) -> f64 {
        frobenius_norm_sq(self.as_slice())
    }

    pub fn matricize(&self, mode: usize) -> Result<Matricized> {
        check_mode(mode)?;
        Ok(Matricized {
            mode,
            dims: self.dims(),
            matrix: unfold(self.data.view(), mode),
        })
    }

    /// `self + other`, entrywise.
    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims() != other.dims() {
            return Err(mismatch(format!(
                "cannot add tensors of dims {:?} and {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(Tensor3 {
            data: &self.data + &other.data,
        })
    }
}

/// Mode-`d` unfolding of a [`Tensor3`].
#[derive(Debug, Clone, PartialEq)]
pub struct Matricized {
    pub mode: usize,
    pub dims: Dims,
    pub matrix: Array2<f64>,
}

impl Matricized {
    pub fn tensorize(&self) -> Result<Tensor3> {
        tensorize(self.matrix.view(), self.mode, self.dims)
    }
}

/// Inverse of [`Tensor3::matricize`].
pub fn tensorize(matrix: ArrayView2<'_, f64>, mode: usize, dims: Dims) -> Result<Tensor3> {
    check_mode(mode)?;
    check_dims(dims)?;
    let [a, b] = other_modes(mode);
    let expected = (dims[a] * dims[b], dims[mode]);
    if matrix.dim() != expected {
        return Err(mismatch(format!(
            "mode-{mode} unfolding of dims {dims:?} must be {expected:?}, got {:?}",
            matrix.dim()
        )));
    }
    Ok(Tensor3 {
        data: fold(matrix, mode, dims),
    })
}

/// Observation mask: `true` marks an observed entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    keep: Array3<bool>,
}

impl Mask {
    pub fn all(dims: Dims) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            keep: Array3::from_elem((dims[0], dims[1], dims[2]), true),
        })
    }

    pub fn from_vec(dims: Dims, keep: Vec<bool>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims.iter().product::<usize>();
        if keep.len() != expected {
            return Err(mismatch(format!(
                "mask of dims {dims:?} needs {expected} entries, got {}",
                keep.len()
            )));
        }
        Ok(Self {
            keep: Array3::from_shape_vec((dims[0], dims[1], dims[2]), keep)
                .expect("length checked above"),
        })
    }

    pub fn dims(&self) -> Dims {
        let (a, b, c) = self.keep.dim();
        [a, b, c]
    }

    pub fn as_slice(&self) -> &[bool] {
        self.keep.as_slice().expect("mask storage is standard layout")
    }

    pub fn is_full(&self) -> bool {
        self.keep.iter().all(|&k| k)
    }

    pub fn observed(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Mode-`d` unfolding with the same row order as [`Tensor3::matricize`].
    pub fn matricize(&self, mode: usize) -> Result<Array2<bool>> {
        check_mode(mode)?;
        Ok(unfold(self.keep.view(), mode))
    }

    pub fn apply(&self, t: &Tensor3) -> Result<Tensor3> {
        apply_mask(t, self)
    }
}

/// Zeroes the unobserved entries of `t`.
pub fn apply_mask(t: &Tensor3, mask: &Mask) -> Result<Tensor3> {
    if t.dims() != mask.dims() {
        return Err(mismatch(format!(
            "mask dims {:?} do not match tensor dims {:?}",
            mask.dims(),
            t.dims()
        )));
    }
    let mut data = t.data.clone();
    data.zip_mut_with(&mask.keep, |x, &k| {
        if !k {
            *x = 0.0;
        }
    });
    Ok(Tensor3 { data })
}

/// Sum of squared entries.
pub fn frobenius_norm_sq(values: &[f64]) -> f64 {
    values.iter().map(|x| x * x).sum()
}

/// Sum of squared entries of a matrix (any layout).
pub fn matrix_norm_sq(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

/// Khatri-Rao (column-wise Kronecker) product. Row `i * N + j` of the result
/// holds `x[i, k] * y[j, k]` in column `k`.
pub fn khatri_rao(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (m, k) = x.dim();
    let (n, ky) = y.dim();
    if k != ky {
        return Err(mismatch(format!(
            "Khatri-Rao operands need equal column counts, got {k} and {ky}"
        )));
    }
    if k == 0 {
        return Err(mismatch("Khatri-Rao operands need at least one column"));
    }
    let mut out = Array2::zeros((m * n, k));
    for i in 0..m {
        let xi = x.row(i);
        for j in 0..n {
            let yj = y.row(j);
            let mut row = out.row_mut(i * n + j);
            for c in 0..k {
                row[c] = xi[c] * yj[c];
            }
        }
    }
    Ok(out)
}

/// Factor matrices `F_d` of shape `N_d x R`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    factors: [Array2<f64>; 3],
}

impl FactorSet {
    pub fn new(factors: [Array2<f64>; 3]) -> Result<Self> {
        let rank = factors[0].ncols();
        if rank == 0 {
            return Err(Error::InvalidParameter("rank must be at least 1".into()));
        }
        for (d, f) in factors.iter().enumerate() {
            if f.ncols() != rank {
                return Err(mismatch(format!(
                    "factor {d} has {} columns, expected rank {rank}",
                    f.ncols()
                )));
            }
            if f.nrows() == 0 {
                return Err(mismatch(format!("factor {d} has no rows")));
            }
        }
        Ok(Self { factors })
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn dims(&self) -> Dims {
        [
            self.factors[0].nrows(),
            self.factors[1].nrows(),
            self.factors[2].nrows(),
        ]
    }

    pub fn factor(&self, mode: usize) -> &Array2<f64> {
        &self.factors[mode]
    }

    pub fn factors(&self) -> &[Array2<f64>; 3] {
        &self.factors
    }

    pub fn into_factors(self) -> [Array2<f64>; 3] {
        self.factors
    }

    /// Replaces one factor; its shape must not change.
    pub fn set_factor(&mut self, mode: usize, value: Array2<f64>) -> Result<()> {
        check_mode(mode)?;
        if value.dim() != self.factors[mode].dim() {
            return Err(mismatch(format!(
                "factor {mode} must stay {:?}, got {:?}",
                self.factors[mode].dim(),
                value.dim()
            )));
        }
        self.factors[mode] = value;
        Ok(())
    }

    /// `⊙_{i != mode} F_i` in ascending mode order.
    pub fn khatri_rao_except(&self, mode: usize) -> Result<Array2<f64>> {
        check_mode(mode)?;
        let [a, b] = other_modes(mode);
        khatri_rao(self.factors[a].view(), self.factors[b].view())
    }

    /// `(F_a^T F_a) ∘ (F_b^T F_b)` for the two modes other than `mode`;
    /// equals `W^T W` for `W = khatri_rao_except(mode)`.
    pub fn gram_except(&self, mode: usize) -> Result<Array2<f64>> {
        check_mode(mode)?;
        let [a, b] = other_modes(mode);
        let ga = self.factors[a].t().dot(&self.factors[a]);
        let gb = self.factors[b].t().dot(&self.factors[b]);
        Ok(ga * gb)
    }

    /// Reorders columns: column `r` of the result is column `perm[r]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<FactorSet> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidParameter(format!(
                "{perm:?} is not a permutation of 0..{rank}"
            )));
        }
        let factors = self
            .factors
            .clone()
            .map(|f| f.select(Axis(1), perm));
        Ok(FactorSet { factors })
    }
}

/// `X[i,j,k] = sum_r F_0[i,r] F_1[j,r] F_2[k,r]`.
pub fn cp_reconstruct(f: &FactorSet) -> Tensor3 {
    let dims = f.dims();
    let w = f.khatri_rao_except(2).expect("mode 2 is valid");
    let unfolded = w.dot(&f.factor(2).t()).as_standard_layout().into_owned();
    let data = unfolded
        .into_shape_with_order((dims[0], dims[1], dims[2]))
        .expect("mode-2 unfolding is a reshape");
    Tensor3 { data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn seq_tensor(dims: Dims) -> Tensor3 {
        let n = dims.iter().product::<usize>();
        Tensor3::from_vec(dims, (0..n).map(|x| x as f64 * 0.5 - 3.0).collect()).unwrap()
    }

    #[test]
    fn khatri_rao_single_column() {
        let x = array![[1.0], [2.0]];
        let y = array![[3.0], [4.0]];
        let out = khatri_rao(x.view(), y.view()).unwrap();
        assert_eq!(out, array![[3.0], [4.0], [6.0], [8.0]]);
    }

    #[test]
    fn khatri_rao_ones() {
        let out = khatri_rao(Array2::ones((2, 2)).view(), Array2::ones((3, 2)).view()).unwrap();
        assert_eq!(out, Array2::<f64>::ones((6, 2)));
    }

    #[test]
    fn khatri_rao_column_mismatch() {
        let err = khatri_rao(Array2::ones((2, 2)).view(), Array2::ones((3, 3)).view());
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn degenerate_matricization() {
        let t = Tensor3::from_vec([2, 1, 1], vec![1.5, -2.0]).unwrap();
        let m = t.matricize(0).unwrap();
        assert_eq!(m.matrix, array![[1.5, -2.0]]);
    }

    #[test]
    fn invalid_mode_rejected() {
        let t = seq_tensor([2, 2, 2]);
        assert!(matches!(t.matricize(3), Err(Error::InvalidMode(3))));
    }

    #[test]
    fn tensorize_edge_cases() {
        let z = tensorize(Array2::zeros((12, 5)).view(), 2, [3, 4, 5]).unwrap();
        assert_eq!(z, Tensor3::zeros([3, 4, 5]).unwrap());
        let s = tensorize(array![[2.5]].view(), 0, [1, 1, 1]).unwrap();
        assert_eq!(s.get(0, 0, 0), 2.5);
        assert!(tensorize(Array2::zeros((3, 3)).view(), 0, [3, 4, 5]).is_err());
    }

    #[test]
    fn round_trip_every_mode() {
        let t = seq_tensor([4, 3, 2]);
        for d in 0..3 {
            assert_eq!(t.matricize(d).unwrap().tensorize().unwrap(), t);
        }
    }

    #[test]
    fn matricize_row_order() {
        let t = seq_tensor([2, 3, 4]);
        let m1 = t.matricize(1).unwrap().matrix;
        // mode 1: row = i * N3 + k, column j
        assert_eq!(m1[[4 + 3, 2]], t.get(1, 2, 3));
        let m0 = t.matricize(0).unwrap().matrix;
        assert_eq!(m0[[2 * 4 + 1, 1]], t.get(1, 2, 1));
        let m2 = t.matricize(2).unwrap().matrix;
        assert_eq!(m2[[3 + 2, 3]], t.get(1, 2, 3));
    }

    #[test]
    fn reconstruct_trivial_cases() {
        let ones = FactorSet::new([
            Array2::ones((2, 1)),
            Array2::ones((2, 1)),
            Array2::ones((2, 1)),
        ])
        .unwrap();
        assert!(cp_reconstruct(&ones).as_slice().iter().all(|&x| x == 1.0));

        let zero = FactorSet::new([
            Array2::ones((3, 2)),
            Array2::zeros((4, 2)),
            Array2::ones((2, 2)),
        ])
        .unwrap();
        assert!(cp_reconstruct(&zero).as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mask_trivial_cases() {
        let t = seq_tensor([2, 2, 2]);
        let all = Mask::all([2, 2, 2]).unwrap();
        assert_eq!(apply_mask(&t, &all).unwrap(), t);
        let none = Mask::from_vec([2, 2, 2], vec![false; 8]).unwrap();
        assert_eq!(apply_mask(&t, &none).unwrap(), Tensor3::zeros([2, 2, 2]).unwrap());
        let wrong = Mask::all([2, 2, 3]).unwrap();
        assert!(apply_mask(&t, &wrong).is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(Tensor3::zeros([2, 3, 1]).unwrap().norm_sq(), 0.0);
        assert_eq!(Tensor3::from_vec([2, 2, 2], vec![1.0; 8]).unwrap().norm_sq(), 8.0);
        assert_eq!(matrix_norm_sq(array![[1.0, 2.0], [3.0, 4.0]].view()), 30.0);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Tensor3::from_vec([2, 2, 2], vec![0.0; 7]).is_err());
        assert!(Tensor3::from_vec([1, 1, 1], vec![f64::NAN]).is_err());
        assert!(Tensor3::zeros([0, 1, 1]).is_err());
        assert!(FactorSet::new([
            Array2::ones((2, 2)),
            Array2::ones((2, 3)),
            Array2::ones((2, 2)),
        ])
        .is_err());
    }

    #[test]
    fn permute_columns_validates() {
        let f = FactorSet::new([
            array![[1.0, 2.0]],
            array![[3.0, 4.0]],
            array![[5.0, 6.0]],
        ])
        .unwrap();
        let p = f.permute_columns(&[1, 0]).unwrap();
        assert_eq!(p.factor(2), &array![[6.0, 5.0]]);
        assert!(f.permute_columns(&[0, 0]).is_err());
        assert!(f.permute_columns(&[0]).is_err());
    }
}
