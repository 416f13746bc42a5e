//! Adaptive Gauss–Kronrod quadrature on finite intervals, half-lines and the
//! real line.
//!
//! The finite-interval driver is the classical globally adaptive scheme: a
//! 21-point Kronrod rule with its embedded 10-point Gauss rule supplies both
//! the estimate and an error bound per segment, and the segment with the
//! largest error is bisected until the summed error meets the tolerance.
//!
//! Half-lines are integrated directly over a leading stretch and mapped onto
//! `(0, 1]` with `u = exp(-(z - a))` beyond it. The map turns an `exp(-z)`
//! decay into a constant integrand, which suits the exponentially tilted
//! Gumbel kernels used throughout the crate; keeping the bulk in `z` avoids
//! the endless oscillation that `sin(z)` would acquire near `u = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How half-line and line integrals treat their infinite ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffPolicy {
    /// Truncate to a fixed window and integrate the finite piece.
    FixedWindow,
    /// No truncation: the far tail goes through the exponential substitution.
    AdaptiveTail,
}

/// Width of the truncated range used by [`CutoffPolicy::FixedWindow`].
pub const FIXED_WINDOW: f64 = 64.0;
/// Left edge used by [`CutoffPolicy::FixedWindow`] for whole-line integrals.
/// Gumbel kernels carry `exp(-exp(8))` there, far below any tolerance.
pub const FIXED_WINDOW_LEFT: f64 = -8.0;

/// Length of the leading stretch that the adaptive half-line rule
/// integrates without the exponential map.
const TAIL_SPLIT: f64 = 32.0;
/// Initial partition of that stretch, finest at its start.
const HEAD_BREAKS: [f64; 9] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, TAIL_SPLIT];

/// Tolerances and limits for every quadrature call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub halfline_cutoff_policy: CutoffPolicy,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_subdivisions: 2048,
            halfline_cutoff_policy: CutoffPolicy::AdaptiveTail,
        }
    }
}

impl QuadConfig {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        let cfg = Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) || self.max_subdivisions < 1 {
            return Err(Error::Domain(format!(
                "quadrature config needs abs_tol > 0, rel_tol > 0, max_subdivisions >= 1 (got {}, {}, {})",
                self.abs_tol, self.rel_tol, self.max_subdivisions
            )));
        }
        Ok(())
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    fn tolerance_for(&self, estimate: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * estimate.abs())
    }
}

// Kronrod abscissae and weights for the 21-point rule, and the weights of the
// embedded 10-point Gauss rule (odd Kronrod abscissae).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600525102730,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod21<F: Fn(f64) -> f64 + ?Sized>(g: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = g(center);
    let mut res_g = 0.0;
    let mut res_k = WGK[10] * fc;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = g(center - dx);
        let f2 = g(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut error = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Segment { a, b, value, error }
}

/// Adaptive integral of `g` over the finite interval `[a, b]`.
pub fn integrate_interval<F>(g: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_breaks(g, &[a, b], cfg)
}

/// Adaptive integral over `[breaks[0], breaks[last]]`, starting from the
/// partition given by `breaks` so that features near a break are not missed.
fn integrate_breaks<F>(g: F, breaks: &[f64], cfg: &QuadConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    let (a, b) = (breaks[0], breaks[breaks.len() - 1]);
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!(
            "finite interval required, got [{a}, {b}]"
        )));
    }
    let mut segments: Vec<Segment> = breaks
        .windows(2)
        .map(|w| kronrod21(&g, w[0], w[1]))
        .collect();
    let mut total: f64 = segments.iter().map(|s| s.value).sum();
    let mut total_err: f64 = segments.iter().map(|s| s.error).sum();
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::NonConvergence {
                estimate: total,
                error_estimate: total_err,
                subdivisions: segments.len(),
            });
        }
        if total_err <= cfg.tolerance_for(total) {
            return Ok(total);
        }
        if segments.len() >= cfg.max_subdivisions {
            break;
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one segment");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a.min(seg.b) || mid >= seg.a.max(seg.b) {
            // Cannot split further in double precision.
            segments.push(seg);
            break;
        }
        let left = kronrod21(&g, seg.a, mid);
        let right = kronrod21(&g, mid, seg.b);
        total += left.value + right.value - seg.value;
        total_err += left.error + right.error - seg.error;
        segments.push(left);
        segments.push(right);
        // Re-sum occasionally so incremental updates do not drift.
        if segments.len().is_multiple_of(64) {
            total = segments.iter().map(|s| s.value).sum();
            total_err = segments.iter().map(|s| s.error).sum();
        }
    }
    total = segments.iter().map(|s| s.value).sum();
    total_err = segments.iter().map(|s| s.error).sum();
    if total_err <= cfg.tolerance_for(total) {
        return Ok(total);
    }
    Err(Error::NonConvergence {
        estimate: total,
        error_estimate: total_err,
        subdivisions: segments.len(),
    })
}

/// `∫_a^b g(z) dz` for `b` possibly infinite, using the exponential
/// substitution `u = exp(-(z - a))`.
pub fn integrate_exp_mapped<F>(g: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if b <= a {
        return Ok(0.0);
    }
    let u_lo = if b.is_finite() { (-(b - a)).exp() } else { 0.0 };
    integrate_interval(
        |u: f64| {
            let z = a - u.ln();
            let v = g(z);
            if v == 0.0 {
                0.0
            } else {
                v / u
            }
        },
        u_lo,
        1.0,
        cfg,
    )
}

/// `∫_a^∞ g(z) dz` for integrands with exponential (or faster) decay.
pub fn integrate_halfline<F>(g: F, a: f64, cfg: &QuadConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    match cfg.halfline_cutoff_policy {
        CutoffPolicy::AdaptiveTail => {
            // Directly in z near the start, where oscillating integrands
            // (sin z e^{-z}) are cheap; mapped beyond, where little is left.
            let half = cfg.with_abs_tol(0.5 * cfg.abs_tol);
            let breaks = HEAD_BREAKS.map(|d| a + d);
            let head = integrate_breaks(&g, &breaks, &half)?;
            let tail = integrate_exp_mapped(&g, a + TAIL_SPLIT, f64::INFINITY, &half)?;
            Ok(head + tail)
        }
        CutoffPolicy::FixedWindow => integrate_interval(g, a, a + FIXED_WINDOW, cfg),
    }
}

/// `∫_{-∞}^b g(z) dz` for integrands with a double-exponential left tail.
pub fn integrate_left_tail<F>(g: F, b: f64, cfg: &QuadConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    match cfg.halfline_cutoff_policy {
        CutoffPolicy::AdaptiveTail => integrate_halfline(|y| g(b - y), 0.0, cfg),
        CutoffPolicy::FixedWindow => {
            let lo = FIXED_WINDOW_LEFT.min(b - 1.0);
            integrate_interval(g, lo, b, cfg)
        }
    }
}

/// `∫_ℝ g(z) dz` for Gumbel-weighted integrands: double-exponential decay on
/// the left and exponential decay on the right.
///
/// The adaptive route splits at zero. The right piece is a half-line
/// integral; the left piece is rewritten with `w = exp(-z)` as
/// `∫_1^∞ g(-ln w)/w dw`, which decays exponentially in `w`.
pub fn integrate_line<F>(g: F, cfg: &QuadConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let half = cfg.with_abs_tol(0.5 * cfg.abs_tol);
    match cfg.halfline_cutoff_policy {
        CutoffPolicy::AdaptiveTail => {
            let right = integrate_halfline(&g, 0.0, &half)?;
            let left = integrate_halfline(
                |w: f64| {
                    let v = g(-w.ln());
                    if v == 0.0 {
                        0.0
                    } else {
                        v / w
                    }
                },
                1.0,
                &half,
            )?;
            Ok(left + right)
        }
        CutoffPolicy::FixedWindow => {
            let left = integrate_interval(&g, FIXED_WINDOW_LEFT, 0.0, &half)?;
            let right = integrate_interval(&g, 0.0, FIXED_WINDOW, &half)?;
            Ok(left + right)
        }
    }
}
