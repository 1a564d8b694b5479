use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededStream;
use crate::tensor::{cp_reconstruct, Dims, FactorSet, Mask, Tensor3};

/// Synthetic regularized-NTF problem: uniform (0, 1) ground-truth factors,
/// a fraction of one factor's entries zeroed, additive Gaussian noise and a
/// full observation mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dims: Dims,
    pub rank: usize,
    /// 0-based mode whose factor is sparsified.
    pub sparse_mode: usize,
    /// Fraction of that factor's entries set to zero, in [0, 1).
    pub sparsity: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dims: [100, 100, 100],
            rank: 10,
            sparse_mode: 0,
            sparsity: 0.8,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "dims must be positive, got {:?}",
                self.dims
            )));
        }
        if self.rank == 0 {
            return Err(Error::InvalidParameter("rank must be at least 1".into()));
        }
        if self.sparse_mode >= 3 {
            return Err(Error::InvalidMode(self.sparse_mode));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::InvalidParameter(format!(
                "sparsity must be in [0, 1), got {}",
                self.sparsity
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise_sigma must be finite and nonnegative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    /// Number of zeroed entries in the sparse factor.
    pub fn zero_count(&self) -> usize {
        let total = self.dims[self.sparse_mode] * self.rank;
        ((self.sparsity * total as f64).round() as usize).min(total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub y: Tensor3,
    pub truth: FactorSet,
    pub mask: Mask,
}

/// Draw order from one seeded stream: the three truth factors (row-major,
/// mode 0 first), the zeroed positions, then the noise in tensor order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut stream = SeededStream::new(spec.seed);
    let mut factors = spec
        .dims
        .map(|n| Array2::from_shape_fn((n, spec.rank), |_| stream.uniform()));

    let sparse = &mut factors[spec.sparse_mode];
    let cells = sparse.len();
    let flat = sparse.as_slice_mut().expect("fresh arrays are contiguous");
    for idx in stream.sample_without_replacement(cells, spec.zero_count()) {
        flat[idx] = 0.0;
    }

    let truth = FactorSet::new(factors)?;
    let clean = cp_reconstruct(&truth);
    let y = if spec.noise_sigma > 0.0 {
        let noisy: Vec<f64> = clean
            .as_slice()
            .iter()
            .map(|&x| x + stream.normal(spec.noise_sigma))
            .collect();
        Tensor3::from_vec(spec.dims, noisy)?
    } else {
        clean
    };
    Ok(SyntheticData {
        mask: Mask::all(spec.dims)?,
        y,
        truth,
    })
}
