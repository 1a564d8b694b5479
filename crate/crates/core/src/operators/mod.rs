//! Proximity operators, projections and linear operators for the per-mode
//! regularizer `h_d(L_d(F_d^T))` and hard constraint `F_d^T ∈ C_d`.

mod linop;
mod projection;
mod prox;

pub use linop::{LinOp, LinOpKind, NORM_SAFETY_FACTOR};
pub use projection::Projection;
pub use prox::ProxFn;
