//! Standard Gumbel law, its Laplace transform, max-stability, and the
//! exponential-to-geometric map used by the coupon couplings.

use std::fmt;
use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::error::{domain, Result};
use crate::quad::{integrate_line, QuadConfig};
use crate::rng::RngStream;

/// Euler–Mascheroni constant, the mean of the standard Gumbel law.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// The standard Gumbel law `G(0, 1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GumbelStd;

impl GumbelStd {
    pub fn cdf(&self, x: f64) -> f64 {
        gumbel_cdf(x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        gumbel_pdf(x)
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        gumbel_sample(rng)
    }

    /// `E[f(Z)]` by quadrature.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, cfg: &QuadConfig) -> Result<f64> {
        integrate_line(|x| f(x) * gumbel_pdf(x), cfg)
    }
}

/// `exp(-exp(-x))`.
pub fn gumbel_cdf(x: f64) -> f64 {
    (-(-x).exp()).exp()
}

/// `exp(-(x + exp(-x)))`.
pub fn gumbel_pdf(x: f64) -> f64 {
    let e = (-x).exp();
    if e.is_infinite() {
        return 0.0;
    }
    (-(x + e)).exp()
}

/// Inverse-transform draw `-ln(-ln U)`.
pub fn gumbel_sample(rng: &mut RngStream) -> f64 {
    -(-rng.uniform().ln()).ln()
}

/// Laplace transform `E[exp(-λZ)] = Γ(λ + 1)`, finite for `λ > -1`.
pub fn gumbel_laplace(lambda: f64) -> Result<f64> {
    if !(lambda > -1.0) {
        return domain(format!("Laplace transform needs lambda > -1, got {lambda}"));
    }
    Ok(gamma(lambda + 1.0))
}

/// Distance between the CDF of `max(Z' + ln a, Z'' + ln(1-a))` and the
/// Gumbel CDF at `x`, both in closed form. Zero up to rounding.
pub fn max_stability_residual(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return domain(format!("max-stability weight must lie in (0,1), got {a}"));
    }
    let e = (-x).exp();
    let max_cdf = (-a * e).exp() * (-(1.0 - a) * e).exp();
    Ok((max_cdf - gumbel_cdf(x)).abs())
}

/// `ceil(-y / ln(1 - p))`, at least 1. For `Y ~ Exp(1)` this is `Geom(p)` on
/// `{1, 2, ...}`, and it is non-increasing in `p` for fixed `y`.
pub fn geometric_from_exponential(y: f64, p: f64) -> Result<u64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("geometric parameter must lie in (0,1), got {p}"));
    }
    if !(y >= 0.0) {
        return domain(format!("exponential draw must be non-negative, got {y}"));
    }
    Ok(ceil_ratio(y, -(-p).ln_1p()))
}

/// `max(1, ceil(y / rate))` for `rate > 0`; `rate = ∞` (p = 1) gives 1.
#[inline]
pub(crate) fn ceil_ratio(y: f64, rate: f64) -> u64 {
    let k = (y / rate).ceil();
    if k < 1.0 {
        1
    } else {
        k as u64
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A test function `f` together with its derivative and Lipschitz data.
///
/// `lip_f` bounds the Lipschitz constant of `f`, `lip_fprime` that of `f'`,
/// and `sup_fprime` bounds `|f'|`. The `Lip[2]` norm is the larger of the two
/// Lipschitz constants. Infinite values are allowed for unbounded growth.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    f: RealFn,
    fprime: RealFn,
    pub lip_f: f64,
    pub lip_fprime: f64,
    pub sup_fprime: f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("lip_f", &self.lip_f)
            .field("lip_fprime", &self.lip_fprime)
            .field("sup_fprime", &self.sup_fprime)
            .finish()
    }
}

impl TestFunction {
    pub fn new<F, D>(
        name: impl Into<String>,
        f: F,
        fprime: D,
        lip_f: f64,
        lip_fprime: f64,
        sup_fprime: f64,
    ) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        debug_assert!(lip_f >= 0.0 && lip_fprime >= 0.0 && sup_fprime >= 0.0);
        Self {
            name: name.into(),
            f: Arc::new(f),
            fprime: Arc::new(fprime),
            lip_f,
            lip_fprime,
            sup_fprime,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        (self.fprime)(x)
    }

    pub fn lip2_norm(&self) -> f64 {
        self.lip_f.max(self.lip_fprime)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), move |_| c, |_| 0.0, 0.0, 0.0, 0.0)
    }

    pub fn identity() -> Self {
        Self::new("identity", |x| x, |_| 1.0, 1.0, 0.0, 1.0)
    }

    pub fn sin() -> Self {
        Self::new("sin", f64::sin, f64::cos, 1.0, 1.0, 1.0)
    }

    pub fn cos() -> Self {
        Self::new("cos", f64::cos, |x: f64| -x.sin(), 1.0, 1.0, 1.0)
    }

    /// `exp(-x)` on the whole line; not Lipschitz.
    pub fn exp_neg() -> Self {
        Self::new(
            "exp_neg",
            |x: f64| (-x).exp(),
            |x: f64| -(-x).exp(),
            f64::INFINITY,
            f64::INFINITY,
            f64::INFINITY,
        )
    }

    /// `exp(-λx)`; used for Laplace-transform identities.
    pub fn exp_tilt(lambda: f64) -> Self {
        Self::new(
            format!("exp_tilt({lambda})"),
            move |x: f64| (-lambda * x).exp(),
            move |x: f64| -lambda * (-lambda * x).exp(),
            f64::INFINITY,
            f64::INFINITY,
            f64::INFINITY,
        )
    }

    /// Same function scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let f = self.f.clone();
        let d = self.fprime.clone();
        Self {
            name: format!("{}*{c}", self.name),
            f: Arc::new(move |x| c * f(x)),
            fprime: Arc::new(move |x| c * d(x)),
            lip_f: self.lip_f * c.abs(),
            lip_fprime: self.lip_fprime * c.abs(),
            sup_fprime: self.sup_fprime * c.abs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::QuadConfig;

    #[test]
    fn cdf_values() {
        assert!((gumbel_cdf(0.0) - (-1.0f64).exp()).abs() < 1e-16);
        assert_eq!(gumbel_cdf(50.0), 1.0);
        let median = -(-(0.5f64).ln()).ln();
        assert!((gumbel_cdf(median) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cdf_is_strictly_increasing_on_grid() {
        let xs: Vec<f64> = (-30..=30).map(|i| i as f64 * 0.1).collect();
        for w in xs.windows(2) {
            assert!(gumbel_cdf(w[1]) > gumbel_cdf(w[0]));
        }
    }

    #[test]
    fn pdf_is_derivative_of_cdf() {
        for &x in &[-2.0, -0.3, 0.0, 1.0, 4.0] {
            let h = 1e-5;
            let fd = (gumbel_cdf(x + h) - gumbel_cdf(x - h)) / (2.0 * h);
            assert!((fd - gumbel_pdf(x)).abs() < 1e-9);
        }
        assert_eq!(gumbel_pdf(-800.0), 0.0);
    }

    #[test]
    fn sampling_moments() {
        let mut rng = RngStream::new(2024, 0);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut below = 0usize;
        for _ in 0..n {
            let z = gumbel_sample(&mut rng);
            sum += z;
            if z <= 0.0 {
                below += 1;
            }
        }
        let mean = sum / n as f64;
        let q = GumbelStd.expect(|x| x, &QuadConfig::default()).unwrap();
        assert!((q - EULER_GAMMA).abs() < 1e-10);
        assert!((mean - q).abs() < 0.005, "mean {mean}");
        let ecdf = below as f64 / n as f64;
        assert!((ecdf - (-1.0f64).exp()).abs() < 0.002, "ecdf {ecdf}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = gumbel_sample(&mut RngStream::new(1, 2));
        let b = gumbel_sample(&mut RngStream::new(1, 2));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn kolmogorov_statistic_below_one_percent_critical_value() {
        let mut rng = RngStream::new(99, 0);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| gumbel_sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = gumbel_cdf(x);
                (f - i as f64 / n as f64)
                    .abs()
                    .max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic.
        assert!(d < 1.628 / (n as f64).sqrt(), "D = {d}");
    }

    #[test]
    fn laplace_transform() {
        assert!((gumbel_laplace(1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((gumbel_laplace(2.0).unwrap() - 2.0).abs() < 1e-14);
        let half = gumbel_laplace(0.5).unwrap();
        let quad = GumbelStd
            .expect(|x: f64| (-0.5 * x).exp(), &QuadConfig::default())
            .unwrap();
        assert!((half - quad).abs() < 1e-10);
        assert!((half - 0.886_226_925_452_758).abs() < 1e-12);
        assert!(gumbel_laplace(-1.0).is_err());
        assert!(gumbel_laplace(-3.0).is_err());
    }

    #[test]
    fn laplace_recursion_on_grid() {
        for i in 0..20 {
            let t = -0.95 + i as f64 * 0.05;
            let lhs = gumbel_laplace(t).unwrap();
            let rhs = gumbel_laplace(1.0 + t).unwrap() / (1.0 + t);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs(), "t={t}");
        }
    }

    #[test]
    fn max_stability_examples() {
        assert!(max_stability_residual(0.5, 0.0).unwrap() < 1e-15);
        assert!(max_stability_residual(0.99, -3.0).unwrap() < 1e-15);
        assert!(max_stability_residual(0.1, 2.0).unwrap() < 1e-15);
        assert!(max_stability_residual(0.0, 0.0).is_err());
        assert!(max_stability_residual(1.0, 0.0).is_err());
    }

    #[test]
    fn max_stability_by_sampling() {
        let a: f64 = 0.3;
        let mut rng = RngStream::new(5, 0);
        let n = 200_000;
        let below = (0..n)
            .filter(|_| {
                let z1 = gumbel_sample(&mut rng) + a.ln();
                let z2 = gumbel_sample(&mut rng) + (1.0 - a).ln();
                z1.max(z2) <= 0.5
            })
            .count();
        let p = gumbel_cdf(0.5);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((below as f64 / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn geometric_map_examples() {
        assert_eq!(geometric_from_exponential(0.2, 0.5).unwrap(), 1);
        assert_eq!(geometric_from_exponential(1.5, 0.5).unwrap(), 3);
        assert_eq!(geometric_from_exponential(0.0, 0.5).unwrap(), 1);
        assert!(geometric_from_exponential(1.0, 0.0).is_err());
        assert!(geometric_from_exponential(1.0, 1.0).is_err());
        assert!(geometric_from_exponential(-1.0, 0.5).is_err());
    }

    #[test]
    fn geometric_map_law_matches_pmf() {
        let mut rng = RngStream::new(11, 0);
        let n = 1_000_000;
        let mut counts = [0usize; 12];
        for _ in 0..n {
            let k = geometric_from_exponential(rng.exponential(), 0.5).unwrap() as usize;
            if k < counts.len() {
                counts[k] += 1;
            }
        }
        for (k, &c) in counts.iter().enumerate().skip(1) {
            let p = 0.5f64.powi(k as i32);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let freq = c as f64 / n as f64;
            assert!((freq - p).abs() <= 3.0 * se, "atom {k}: {freq} vs {p}");
        }
    }

    #[test]
    fn test_function_lipschitz_data() {
        let s = TestFunction::sin();
        assert_eq!(s.lip2_norm(), 1.0);
        let half = s.scaled(0.5);
        assert_eq!(half.lip_f, 0.5);
        assert!((half.value(1.0) - 0.5 * 1f64.sin()).abs() < 1e-16);
    }
}
