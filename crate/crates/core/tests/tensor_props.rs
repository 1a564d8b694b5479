mod common;

use aopds::rng::SeededStream;
use aopds::tensor::{frobenius_norm_sq, other_modes};
use aopds::{apply_mask, cp_reconstruct, khatri_rao, tensorize, Mask, Tensor3};
use ndarray::{array, Array2};
use proptest::prelude::*;

use common::{random_factors, random_tensor, rel_err};

fn dims_strategy() -> impl Strategy<Value = [usize; 3]> {
    [1usize..6, 1usize..6, 1usize..6]
}

fn random_mask(dims: [usize; 3], seed: u64) -> Mask {
    let mut s = SeededStream::new(seed);
    let n = dims.iter().product();
    Mask::from_vec(dims, (0..n).map(|_| s.uniform() < 0.6).collect()).unwrap()
}

proptest! {
    #[test]
    fn unfolding_identity(dims in dims_strategy(), rank in 1usize..4, seed in any::<u64>()) {
        let f = random_factors(dims, rank, seed);
        let x = cp_reconstruct(&f);
        for d in 0..3 {
            let [a, b] = other_modes(d);
            let w = khatri_rao(f.factor(a).view(), f.factor(b).view()).unwrap();
            let want = w.dot(&f.factor(d).t());
            let got = x.matricize(d).unwrap().matrix;
            prop_assert!(rel_err(&got, &want) <= 1e-12);
        }
    }

    #[test]
    fn round_trip_is_exact(dims in dims_strategy(), seed in any::<u64>()) {
        let t = random_tensor(dims, seed);
        for d in 0..3 {
            let m = t.matricize(d).unwrap();
            prop_assert_eq!(m.matrix.dim(), (t.len() / dims[d], dims[d]));
            prop_assert_eq!(tensorize(m.matrix.view(), d, dims).unwrap(), t.clone());
        }
    }

    #[test]
    fn mask_is_idempotent_and_self_adjoint(dims in dims_strategy(), seed in any::<u64>()) {
        let m = random_mask(dims, seed);
        let a = random_tensor(dims, seed ^ 1);
        let b = random_tensor(dims, seed ^ 2);
        let once = apply_mask(&a, &m).unwrap();
        prop_assert_eq!(apply_mask(&once, &m).unwrap(), once.clone());
        let lhs: f64 = once.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
        let mb = apply_mask(&b, &m).unwrap();
        let rhs: f64 = a.as_slice().iter().zip(mb.as_slice()).map(|(x, y)| x * y).sum();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn khatri_rao_shape(m in 1usize..7, n in 1usize..7, k in 1usize..4) {
        let x = Array2::<f64>::ones((m, k));
        let y = Array2::<f64>::ones((n, k));
        prop_assert_eq!(khatri_rao(x.view(), y.view()).unwrap().dim(), (m * n, k));
    }
}

#[test]
fn khatri_rao_loop_oracle() {
    let mut s = SeededStream::new(5);
    let x = common::gaussian(3, 2, &mut s);
    let y = common::gaussian(4, 2, &mut s);
    let got = khatri_rao(x.view(), y.view()).unwrap();
    for k in 0..2 {
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(got[[i * 4 + j, k]], x[[i, k]] * y[[j, k]]);
            }
        }
    }
}

#[test]
fn reconstruct_triple_loop_oracle() {
    let f = random_factors([4, 3, 2], 2, 9);
    let x = cp_reconstruct(&f);
    let mut err = 0.0;
    let mut norm = 0.0;
    for i in 0..4 {
        for j in 0..3 {
            for k in 0..2 {
                let want: f64 = (0..2)
                    .map(|r| f.factor(0)[[i, r]] * f.factor(1)[[j, r]] * f.factor(2)[[k, r]])
                    .sum();
                err += (x.get(i, j, k) - want).powi(2);
                norm += want * want;
            }
        }
    }
    assert!((err / norm).sqrt() <= 1e-12);
}

#[test]
fn rank_one_unfolding() {
    let u = array![[1.0], [2.0]];
    let v = array![[3.0], [-1.0], [0.5]];
    let w = array![[2.0], [4.0]];
    let f = aopds::FactorSet::new([u.clone(), v.clone(), w.clone()]).unwrap();
    let mut data = Vec::new();
    for i in 0..2 {
        for j in 0..3 {
            for k in 0..2 {
                data.push(u[[i, 0]] * v[[j, 0]] * w[[k, 0]]);
            }
        }
    }
    let t = Tensor3::from_vec([2, 3, 2], data).unwrap();
    assert_eq!(cp_reconstruct(&f), t);
    let want = khatri_rao(v.view(), w.view()).unwrap().dot(&u.t());
    assert_eq!(t.matricize(0).unwrap().matrix, want);
}

#[test]
fn frobenius_summation_oracle() {
    let t = random_tensor([3, 4, 5], 21);
    let mut want = 0.0;
    for i in 0..3 {
        for j in 0..4 {
            for k in 0..5 {
                want += t.get(i, j, k) * t.get(i, j, k);
            }
        }
    }
    assert!((frobenius_norm_sq(t.as_slice()) - want).abs() <= 1e-12 * want);
    assert_eq!(Tensor3::from_vec([2, 2, 2], vec![1.0; 8]).unwrap().norm_sq(), 8.0);
}
