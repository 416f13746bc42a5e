//! Stein's method for the standard Gumbel law: the max-type Markov semigroup
//! that leaves it invariant, its generator, and the coupon-collector
//! approximation `T_n / n - ln n -> Gumbel` with quantitative rates.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupon;
pub mod distance;
pub mod error;
pub mod exec;
pub mod gumbel;
pub mod quad;
pub mod rng;
pub mod semigroup;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
pub use gumbel::{GumbelStd, TestFunction, EULER_GAMMA};
pub use quad::{CutoffPolicy, QuadConfig};
pub use rng::RngStream;
pub use semigroup::{GeneratorForm, Semigroup, TimeConstant};
pub use stats::{Estimate, Moments};
