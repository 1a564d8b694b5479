//! Constrained canonical polyadic decomposition of third-order tensors by
//! alternating optimization, with a primal-dual splitting inner solver
//! (AO-PDS) and an ADMM inner solver (AO-ADMM) for comparison.

pub mod admm;
pub mod bench;
pub mod driver;
pub mod error;
pub mod metrics;
pub mod model;
pub mod operators;
pub mod pds;
pub mod rng;
pub mod tensor;
pub mod trace;

pub use error::{Error, Result};
pub use model::{objective, ModeSpec};
pub use tensor::{apply_mask, cp_reconstruct, khatri_rao, tensorize, FactorSet, Mask, Tensor3};
