//! Reproducible random streams.
//!
//! A stream is identified by `(master_seed, stream_id)`. The generator is the
//! ChaCha8 block cipher run in counter mode, so any stream can be re-derived
//! on any worker without coordination: Monte Carlo batch `b` simply opens
//! stream `b` and produces the same draws no matter which thread runs it.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// A deterministic, independently addressable stream of random numbers.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    core: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut core = ChaCha8Rng::seed_from_u64(master_seed);
        core.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            core,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A sibling stream under the same master seed.
    pub fn derive(&self, stream_id: u64) -> Self {
        Self::new(self.master_seed, stream_id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.core.next_u64()
    }

    /// Uniform draw strictly inside `(0, 1)`.
    ///
    /// Uses the top 53 bits and offsets by half an ulp so neither endpoint is
    /// reachable.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.core.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard exponential draw, `-ln U`.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        -self.uniform().ln()
    }
}

/// Free-function form of [`RngStream::uniform`].
pub fn uniform(rng: &mut RngStream) -> f64 {
    rng.uniform()
}

/// Stream ids used by the Monte Carlo drivers. The high bits separate the
/// purpose of a draw, the low bits index the batch.
pub(crate) fn stream_for(purpose: u64, batch: u64) -> u64 {
    (purpose << 40) | batch
}
