//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (default) work items are spread over the rayon
//! pool. Results are always returned in item order, and every reduction in
//! the crate folds them sequentially afterwards, so parallel and sequential
//! runs produce bit-identical numbers.

use serde::{Deserialize, Serialize};

use crate::rng::{stream_for, RngStream};

/// Samples per Monte Carlo batch. Fixed so that batch boundaries, and hence
/// results, do not depend on the thread count.
pub const BATCH_SIZE: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Maps `f` over `0..len`, preserving order.
    pub fn map_indices<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }

    /// Maps `f` over a slice, preserving order.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }
}

impl Execution {
    /// Runs `samples` Monte Carlo draws in fixed-size batches. Batch `b`
    /// draws from stream `(purpose, b)` of `seed`; `f` gets the stream and the
    /// batch length. Per-batch results come back in batch order.
    pub fn monte_carlo<A, F>(self, samples: u64, seed: u64, purpose: u64, f: F) -> Vec<A>
    where
        A: Send,
        F: Fn(&mut RngStream, u64) -> A + Sync + Send,
    {
        let batches = samples.div_ceil(BATCH_SIZE);
        self.map_indices(batches as usize, |b| {
            let b = b as u64;
            let len = BATCH_SIZE.min(samples - b * BATCH_SIZE);
            let mut rng = RngStream::new(seed, stream_for(purpose, b));
            f(&mut rng, len)
        })
    }
}
