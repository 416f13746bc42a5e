use serde::{Deserialize, Serialize};

/// A mean with its standard error. Exact computations carry `std_err == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Self { mean, std_err: 0.0 }
    }

    /// `|self - other| <= k` combined standard errors, assuming independence.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.mean - other.mean).abs() <= k * self.std_err.hypot(other.std_err)
    }
}

/// Running first and second moments. Merging is order-sensitive only through
/// floating-point rounding, so callers merge batches in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    pub count: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.push_weighted(x, 1.0);
    }

    #[inline]
    pub fn push_weighted(&mut self, x: f64, w: f64) {
        self.count += w;
        self.sum += w * x;
        self.sum_sq += w * x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn estimate(&self) -> Estimate {
        if self.count == 0.0 {
            return Estimate {
                mean: f64::NAN,
                std_err: f64::NAN,
            };
        }
        let mean = self.sum / self.count;
        let var = if self.count > 1.0 {
            ((self.sum_sq - self.count * mean * mean) / (self.count - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            std_err: (var / self.count).sqrt(),
        }
    }
}

/// `H_n = Σ_{i ≤ n} 1/i`, summed from the small terms up.
pub fn harmonic(n: u64) -> f64 {
    (1..=n).rev().map(|i| 1.0 / i as f64).sum()
}
