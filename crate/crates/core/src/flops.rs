//! Floating-point operation accounting.
//!
//! Counts are nominal: a multiply-add is two flops, a division or square
//! root is one. They are the performance currency of the solver report, so
//! every routine that does asymptotically relevant work charges a counter.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Default)]
pub struct FlopCounter(AtomicU64);

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&self, flops: u64) {
        self.0.fetch_add(flops, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Nominal cost of an `m x k` by `k x n` product.
#[inline]
pub fn gemm_flops(m: usize, k: usize, n: usize) -> u64 {
    2 * (m as u64) * (k as u64) * (n as u64)
}
