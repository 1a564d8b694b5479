//! Seeded random streams.
//!
//! Every random quantity in the crate is derived from a ChaCha20 stream
//! (`rand_chacha::ChaCha20Rng::seed_from_u64`) through the transforms below,
//! so the draws can be reproduced outside Rust from the same 64-bit words:
//!
//! * uniform on the open interval (0, 1): `((w >> 11) + 0.5) * 2^-53`
//!   for one 64-bit word `w`;
//! * standard normal: Box-Muller on two consecutive uniforms `u1, u2`,
//!   `r = sqrt(-2 ln u1)`, yielding `r cos(2 pi u2)` and then, on the next
//!   call, `r sin(2 pi u2)`;
//! * index in `0..n`: `floor(u * n)` for one uniform `u`, clamped to `n - 1`.
//!
//! Independent consumers share a seed but read different ChaCha20 streams
//! (`set_stream`): [`DATA_STREAM`] for synthetic data, [`INIT_STREAM`] for
//! factor initialization.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const DATA_STREAM: u64 = 0;
pub const INIT_STREAM: u64 = 1;

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct SeededStream {
    rng: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, DATA_STREAM)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            spare_normal: None,
        }
    }

    pub fn next_word(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw strictly inside (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_word() >> 11) as f64 + 0.5) * TWO_POW_M53
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal(&mut self, sigma: f64) -> f64 {
        sigma * self.standard_normal()
    }

    /// Uniform index in `0..n`; `n` must be positive.
    pub fn index_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// `k` distinct indices from `0..n`, by a partial Fisher-Yates shuffle.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} of {n} without replacement");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index_below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
