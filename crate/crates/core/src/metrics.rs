//! Factor-recovery error against known ground truth.
//!
//! `MSE = sum_d ||F_d^true - F_d||_F^2 / (R (N_1 + N_2 + N_3))`.
//!
//! CP factors are only identifiable up to a common column permutation, so the
//! aligned variant first reorders the estimate's columns: exhaustively for
//! `R <= 8`, otherwise greedily by the cosine similarity of the stacked
//! columns `[F_1; F_2; F_3]`.

use crate::error::{mismatch, Result};
use crate::tensor::FactorSet;

/// Largest rank for which the alignment enumerates every permutation.
pub const EXHAUSTIVE_ALIGNMENT_MAX_RANK: usize = 8;

fn check_compatible(f: &FactorSet, truth: &FactorSet) -> Result<()> {
    if f.rank() != truth.rank() {
        return Err(mismatch(format!(
            "rank mismatch: estimate has {} columns, truth has {}",
            f.rank(),
            truth.rank()
        )));
    }
    if f.dims() != truth.dims() {
        return Err(mismatch(format!(
            "dims mismatch: estimate {:?}, truth {:?}",
            f.dims(),
            truth.dims()
        )));
    }
    Ok(())
}

fn normalizer(truth: &FactorSet) -> f64 {
    (truth.rank() * truth.dims().iter().sum::<usize>()) as f64
}

/// `cost[r][s]`: squared distance between truth column `r` and estimate
/// column `s`, summed over the three modes.
fn column_costs(f: &FactorSet, truth: &FactorSet) -> Vec<Vec<f64>> {
    let rank = f.rank();
    let mut cost = vec![vec![0.0; rank]; rank];
    for d in 0..3 {
        let (t, e) = (truth.factor(d), f.factor(d));
        for (r, row) in cost.iter_mut().enumerate() {
            for (s, c) in row.iter_mut().enumerate() {
                *c += t
                    .column(r)
                    .iter()
                    .zip(e.column(s))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
        }
    }
    cost
}

fn exhaustive(cost: &[Vec<f64>]) -> Vec<usize> {
    fn search(
        cost: &[Vec<f64>],
        r: usize,
        used: &mut [bool],
        partial: f64,
        current: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        if partial >= best.0 {
            return;
        }
        if r == cost.len() {
            *best = (partial, current.clone());
            return;
        }
        for s in 0..cost.len() {
            if !used[s] {
                used[s] = true;
                current.push(s);
                search(cost, r + 1, used, partial + cost[r][s], current, best);
                current.pop();
                used[s] = false;
            }
        }
    }
    let rank = cost.len();
    let mut best = (f64::INFINITY, (0..rank).collect());
    search(cost, 0, &mut vec![false; rank], 0.0, &mut Vec::with_capacity(rank), &mut best);
    best.1
}

fn greedy(f: &FactorSet, truth: &FactorSet) -> Vec<usize> {
    let rank = f.rank();
    let column = |set: &FactorSet, c: usize| -> Vec<f64> {
        (0..3).flat_map(|d| set.factor(d).column(c).to_vec()).collect()
    };
    let t_cols: Vec<Vec<f64>> = (0..rank).map(|c| column(truth, c)).collect();
    let e_cols: Vec<Vec<f64>> = (0..rank).map(|c| column(f, c)).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut candidates = Vec::with_capacity(rank * rank);
    for (r, t) in t_cols.iter().enumerate() {
        for (s, e) in e_cols.iter().enumerate() {
            let denom = norm(t) * norm(e);
            let dot: f64 = t.iter().zip(e).map(|(a, b)| a * b).sum();
            let sim = if denom > 0.0 { dot / denom } else { 0.0 };
            candidates.push((sim, r, s));
        }
    }
    // stable sort keeps index order among ties
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut perm = vec![usize::MAX; rank];
    let mut taken = vec![false; rank];
    for (_, r, s) in candidates {
        if perm[r] == usize::MAX && !taken[s] {
            perm[r] = s;
            taken[s] = true;
        }
    }
    perm
}

/// Column permutation `p` such that column `p[r]` of `f` is matched with
/// column `r` of `truth`.
pub fn align_permutation(f: &FactorSet, truth: &FactorSet) -> Result<Vec<usize>> {
    check_compatible(f, truth)?;
    if f.rank() <= EXHAUSTIVE_ALIGNMENT_MAX_RANK {
        Ok(exhaustive(&column_costs(f, truth)))
    } else {
        Ok(greedy(f, truth))
    }
}

pub fn mse(f: &FactorSet, truth: &FactorSet, aligned: bool) -> Result<f64> {
    check_compatible(f, truth)?;
    let cost = column_costs(f, truth);
    let perm: Vec<usize> = if aligned {
        align_permutation(f, truth)?
    } else {
        (0..f.rank()).collect()
    };
    let total: f64 = perm.iter().enumerate().map(|(r, &s)| cost[r][s]).sum();
    Ok(total / normalizer(truth))
}

/// Raw and aligned MSE in one pass.
pub fn mse_pair(f: &FactorSet, truth: &FactorSet) -> Result<(f64, f64)> {
    Ok((mse(f, truth, false)?, mse(f, truth, true)?))
}
