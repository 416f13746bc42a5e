//! Coupon collector machinery.
//!
//! `T_n` is the number of uniform draws from `n` items until every item has
//! been seen. It splits as `T_n = Σ_i τ_i^n` with independent
//! `τ_i^n ~ Geom((n - i + 1) / n)`, and `Z_n = T_n / n - ln n` converges in
//! law to the standard Gumbel distribution.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{domain, Error, Result};
use crate::exec::Execution;
use crate::gumbel::ceil_ratio;
use crate::rng::RngStream;
use crate::stats::{Estimate, Moments};

/// Stream purposes, so that independent quantities never share draws.
pub(crate) mod purpose {
    pub const IDENTITY_LHS: u64 = 1;
    pub const IDENTITY_RHS_Z: u64 = 2;
    pub const IDENTITY_RHS_G: u64 = 3;
    pub const COUPLED: u64 = 4;
    pub const COLLECTOR: u64 = 5;
}

/// Tail mass below which atoms of `T_n` are dropped.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// The constants `α_n, β_n, δ_n, K_n, ε_n` of the change-of-measure identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouponConstants {
    pub n: u64,
    /// `1 - 1/n`
    pub alpha_n: f64,
    /// `-(n-1) ln α_n`
    pub beta_n: f64,
    /// `ln(1 - 1/n) - ln(n-1)/n`
    pub delta_n: f64,
    /// `n (1 - 1/n)^{(n-1) ln(n-1)}`
    pub k_n: f64,
    /// `-n ln(1 - 1/n)`
    pub eps_n: f64,
}

impl CouponConstants {
    pub fn new(n: u64) -> Result<Self> {
        if n < 2 {
            return domain(format!("coupon constants need n >= 2, got {n}"));
        }
        let nf = n as f64;
        let ln_alpha = (-1.0 / nf).ln_1p();
        Ok(Self {
            n,
            alpha_n: 1.0 - 1.0 / nf,
            beta_n: -(nf - 1.0) * ln_alpha,
            delta_n: ln_alpha - (nf - 1.0).ln() / nf,
            k_n: Self::ln_k(n).exp(),
            eps_n: -nf * ln_alpha,
        })
    }

    fn ln_k(n: u64) -> f64 {
        let nf = n as f64;
        nf.ln() + (nf - 1.0) * (nf - 1.0).ln() * (-1.0 / nf).ln_1p()
    }

    /// `K_n - 1` without cancellation.
    pub fn k_minus_one(&self) -> f64 {
        Self::ln_k(self.n).exp_m1()
    }

    /// `-1 <= δ_n <= -1/n <= 0 <= α_n < β_n < 1 <= K_n`.
    pub fn chain_holds(&self) -> bool {
        let inv = 1.0 / self.n as f64;
        -1.0 <= self.delta_n
            && self.delta_n <= -inv
            && 0.0 <= self.alpha_n
            && self.alpha_n < self.beta_n
            && self.beta_n < 1.0
            && 1.0 <= self.k_n
    }
}

pub fn constants(n: u64) -> Result<CouponConstants> {
    CouponConstants::new(n)
}

/// One draw of `(τ^{n-1}, τ^n)` from the shared-exponential coupling.
/// Vectors are zero-based: `tau_curr[i - 1]` holds `τ_i^n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoupledTauPair {
    pub tau_prev: Vec<u64>,
    pub tau_curr: Vec<u64>,
}

impl CoupledTauPair {
    /// `τ_{i-1}^{n-1} <= τ_i^n` for every `i >= 2`.
    pub fn is_dominated(&self) -> bool {
        self.tau_prev
            .iter()
            .zip(&self.tau_curr[1..])
            .all(|(p, c)| p <= c)
    }
}

/// Precomputed rates for the coupling: with `Y_2, ..., Y_n` iid `Exp(1)`,
/// `τ_i^n = ⌈Y_i / -ln((i-1)/n)⌉` and `τ_{i-1}^{n-1} = ⌈Y_i / -ln((i-2)/(n-1))⌉`.
#[derive(Debug, Clone)]
pub struct CouplingPlan {
    n: u64,
    rate_curr: Vec<f64>,
    rate_prev: Vec<f64>,
}

impl CouplingPlan {
    pub fn new(n: u64) -> Result<Self> {
        if n < 2 {
            return domain(format!("coupling needs n >= 2, got {n}"));
        }
        let nf = n as f64;
        let rate_curr = (2..=n).map(|i| -((i - 1) as f64 / nf).ln()).collect();
        let rate_prev = (2..=n)
            .map(|i| -((i - 2) as f64 / (nf - 1.0)).ln())
            .collect();
        Ok(Self {
            n,
            rate_curr,
            rate_prev,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn sample(&self, rng: &mut RngStream) -> CoupledTauPair {
        let mut tau_curr = Vec::with_capacity(self.n as usize);
        let mut tau_prev = Vec::with_capacity(self.n as usize - 1);
        tau_curr.push(1);
        for (rc, rp) in self.rate_curr.iter().zip(&self.rate_prev) {
            let y = rng.exponential();
            tau_curr.push(ceil_ratio(y, *rc));
            tau_prev.push(ceil_ratio(y, *rp));
        }
        CoupledTauPair { tau_prev, tau_curr }
    }

    /// `(T_{n-1}, T_n)` from one coupled draw, without allocating.
    #[inline]
    pub fn sample_totals(&self, rng: &mut RngStream) -> (u64, u64) {
        let (mut prev, mut curr) = (0u64, 1u64);
        for (rc, rp) in self.rate_curr.iter().zip(&self.rate_prev) {
            let y = rng.exponential();
            curr += ceil_ratio(y, *rc);
            prev += ceil_ratio(y, *rp);
        }
        (prev, curr)
    }

    /// `T_n` alone.
    #[inline]
    pub fn sample_total(&self, rng: &mut RngStream) -> u64 {
        1 + self
            .rate_curr
            .iter()
            .map(|r| ceil_ratio(rng.exponential(), *r))
            .sum::<u64>()
    }
}

pub fn sample_coupled(n: u64, rng: &mut RngStream) -> Result<CoupledTauPair> {
    Ok(CouplingPlan::new(n)?.sample(rng))
}

/// Draws `T_n` for any `n >= 1`.
pub fn sample_collector_time(n: u64, rng: &mut RngStream) -> Result<u64> {
    match n {
        0 => domain("collector time needs n >= 1"),
        1 => Ok(1),
        _ => Ok(CouplingPlan::new(n)?.sample_total(rng)),
    }
}

/// A realised collector time and its normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectorStat {
    pub n: u64,
    pub t_n: u64,
    pub z_n: f64,
}

/// `z = t / n - ln n`.
#[inline]
pub fn normalize(n: u64, t: u64) -> f64 {
    let nf = n as f64;
    t as f64 / nf - nf.ln()
}

pub fn z_n_from(tau: &[u64]) -> Result<CollectorStat> {
    if tau.is_empty() {
        return domain("z_n_from needs at least one waiting time");
    }
    if tau.contains(&0) {
        return domain("waiting times are positive");
    }
    let n = tau.len() as u64;
    let t_n = tau.iter().sum();
    Ok(CollectorStat {
        n,
        t_n,
        z_n: normalize(n, t_n),
    })
}

/// `ln E[e^{-λ Z_n}] = λ ln n - Σ_{j=1}^n ln(1 + n(e^{λ/n} - 1)/j)`.
pub fn exact_log_exp_moment(n: u64, lambda: f64) -> Result<f64> {
    if n == 0 {
        return domain("exponential moment needs n >= 1");
    }
    if !(lambda >= 0.0) {
        return domain(format!(
            "exponential moment needs lambda >= 0, got {lambda}"
        ));
    }
    let nf = n as f64;
    let c = nf * (lambda / nf).exp_m1();
    let s: f64 = (1..=n).rev().map(|j| (c / j as f64).ln_1p()).sum();
    Ok(lambda * nf.ln() - s)
}

/// `E[e^{-λ Z_n}]` in closed form, evaluated in log space.
pub fn exact_exp_moment(n: u64, lambda: f64) -> Result<f64> {
    Ok(exact_log_exp_moment(n, lambda)?.exp())
}

/// Likelihood ratio `n (1 - 1/n)^{Σ t_i}` between the laws of
/// `(τ_1, ..., τ_{n-1})` with `n` and with `n - 1` coupons.
pub fn density_ratio(t: &[u64], n: u64) -> Result<f64> {
    if n < 2 {
        return domain(format!("density ratio needs n >= 2, got {n}"));
    }
    if t.len() as u64 != n - 1 {
        return domain(format!(
            "density ratio needs {} waiting times, got {}",
            n - 1,
            t.len()
        ));
    }
    let s: u64 = t.iter().sum();
    let nf = n as f64;
    Ok((nf.ln() + s as f64 * (-1.0 / nf).ln_1p()).exp())
}

/// `E|Y - G_n|^2` for `G_n = ⌈-Y / ln α_n⌉ / n`, via the cancellation-free
/// series `Σ_{j>=2} 2 / (j (j+1) n^j)`.
pub fn y_gn_l2_sq(n: u64) -> Result<f64> {
    if n < 2 {
        return domain(format!("y_gn_l2_sq needs n >= 2, got {n}"));
    }
    let x = 1.0 / n as f64;
    let mut pow = x;
    let mut sum = 0.0;
    for j in 2.. {
        pow *= x;
        let term = 2.0 * pow / (j as f64 * (j + 1) as f64);
        sum += term;
        if term <= 1e-18 * sum {
            break;
        }
    }
    Ok(sum)
}

/// `E[Y ⌈Y/λ⌉] = λ e^{-λ} / (1 - e^{-λ})^2 + 1 / (1 - e^{-λ})` for `Y ~ Exp(1)`.
pub fn y_ceil_moment(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return domain(format!("y_ceil_moment needs lambda > 0, got {lambda}"));
    }
    let one_minus = -(-lambda).exp_m1();
    Ok(lambda * (-lambda).exp() / (one_minus * one_minus) + 1.0 / one_minus)
}

/// `2/(n-1) + 2 H_{n-1} / n`, the explicit bound on `‖Z_n - Z_{n-1}‖_{L¹}`.
pub fn z_diff_l1_bound(n: u64) -> Result<f64> {
    if n < 2 {
        return domain(format!("z_diff_l1 needs n >= 2, got {n}"));
    }
    let nf = n as f64;
    Ok(2.0 / (nf - 1.0) + 2.0 * crate::stats::harmonic(n - 1) / nf)
}

/// Monte Carlo estimate of `E|Z_n - Z_{n-1}|` under the coupling.
pub fn z_diff_l1(n: u64, samples: u64, seed: u64, exec: Execution) -> Result<Estimate> {
    if samples == 0 {
        return domain("need at least one sample");
    }
    let plan = CouplingPlan::new(n)?;
    let batches = exec.monte_carlo(samples, seed, purpose::COUPLED, |rng, len| {
        let mut m = Moments::default();
        for _ in 0..len {
            let (tp, tc) = plan.sample_totals(rng);
            m.push((normalize(n, tc) - normalize(n - 1, tp)).abs());
        }
        m
    });
    Ok(merge(&batches).estimate())
}

pub(crate) fn merge(batches: &[Moments]) -> Moments {
    let mut total = Moments::default();
    for b in batches {
        total.merge(b);
    }
    total
}

/// Smallest `k` with `n (1 - 1/n)^k <= tol`, which bounds `P(T_n > k)`.
pub fn union_tail_index(n: u64, tol: f64) -> u64 {
    if n <= 1 {
        return 1;
    }
    let nf = n as f64;
    let k = ((nf / tol).ln() / -(-1.0 / nf).ln_1p()).ceil();
    (k as u64).max(n)
}

/// Exact law of `T_n` on a window `[k_min, k_max]`, from the convolution of
/// the geometric waiting times. Mass outside the window is accounted for in
/// `mass_below` (exact) and `mass_above` (exact up to rounding).
#[derive(Debug, Clone)]
pub struct CollectorLaw {
    n: u64,
    k_min: u64,
    pmf: Vec<f64>,
    mass_below: f64,
    mass_above: f64,
}

impl CollectorLaw {
    /// The pmf of `T_n` on `[n, k_max]`.
    pub fn up_to(n: u64, k_max: u64) -> Result<Self> {
        if n == 0 {
            return domain("collector law needs n >= 1");
        }
        if k_max < n {
            return Ok(Self {
                n,
                k_min: n,
                pmf: Vec::new(),
                mass_below: 0.0,
                mass_above: 1.0,
            });
        }
        // a[m] = P(T_n = n + m); adding Geom(p) - 1 is a[m] <- p a[m] + q a[m-1].
        let len = (k_max - n + 1) as usize;
        let mut a = vec![0.0; len];
        a[0] = 1.0;
        let nf = n as f64;
        // Masses below FLUSH are set to zero: they are irrelevant at any
        // usable tolerance, and subnormal arithmetic would dominate the run time.
        const FLUSH: f64 = 1e-300;
        let mut end = 1;
        for i in 2..=n {
            let q = (i - 1) as f64 / nf;
            let p = 1.0 - q;
            let mut prev = 0.0;
            for (m, v) in a.iter_mut().enumerate() {
                let mut new = p * *v + q * prev;
                if new < FLUSH {
                    new = 0.0;
                    if m >= end {
                        // Past the old support everything further is zero too.
                        end = m;
                        break;
                    }
                }
                *v = new;
                prev = new;
                if m + 1 == len {
                    end = len;
                }
            }
        }
        let total: f64 = a.iter().sum();
        Ok(Self {
            n,
            k_min: n,
            pmf: a,
            mass_below: 0.0,
            mass_above: (1.0 - total).max(0.0),
        })
    }

    /// The law of `T_n` trimmed to the atoms outside tails of mass `tol`.
    pub fn exact(n: u64, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol < 1.0) {
            return domain(format!("tail tolerance must lie in (0,1), got {tol}"));
        }
        let mut law = Self::up_to(n, union_tail_index(n, 0.5 * tol))?;
        let mut below = 0.0;
        let mut skip = 0;
        while skip < law.pmf.len() && below + law.pmf[skip] <= 0.5 * tol {
            below += law.pmf[skip];
            skip += 1;
        }
        law.pmf.drain(..skip);
        law.k_min += skip as u64;
        law.mass_below = below;
        Ok(law)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k_min(&self) -> u64 {
        self.k_min
    }

    pub fn k_max(&self) -> u64 {
        self.k_min + self.pmf.len() as u64 - 1
    }

    pub fn mass_below(&self) -> f64 {
        self.mass_below
    }

    pub fn mass_above(&self) -> f64 {
        self.mass_above
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// `P(T_n = k)`; zero outside the window.
    pub fn prob(&self, k: u64) -> f64 {
        if k < self.k_min {
            return 0.0;
        }
        self.pmf
            .get((k - self.k_min) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    /// `(k, z_k, P(T_n = k))` over the window.
    pub fn atoms(&self) -> impl Iterator<Item = (u64, f64, f64)> + '_ {
        let n = self.n;
        self.pmf.iter().enumerate().map(move |(j, &p)| {
            let k = self.k_min + j as u64;
            (k, normalize(n, k), p)
        })
    }

    /// `Σ_k P(T_n = k) f(z_k)` over the window.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.atoms().map(|(_, z, p)| p * f(z)).sum()
    }
}

/// `P(T_n <= k)`. Uses inclusion-exclusion where it is well conditioned and
/// the exact convolution otherwise (the alternating sum loses all precision
/// for `k` below the bulk once `n` is large).
#[allow(non_snake_case)]
pub fn exact_cdf_Tn(n: u64, k: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if k < n {
        return 0.0;
    }
    if n == 1 {
        return 1.0;
    }
    let nf = n as f64;
    let log_term = |j: u64| ln_binomial(n, j) + k as f64 * (-(j as f64) / nf).ln_1p();
    let largest = (1..n).map(log_term).fold(f64::NEG_INFINITY, f64::max);
    if largest <= 1e3f64.ln() {
        let mut s = 1.0;
        for j in 1..n {
            let term = log_term(j).exp();
            s += if j % 2 == 1 { -term } else { term };
        }
        return s.clamp(0.0, 1.0);
    }
    match CollectorLaw::up_to(n, k) {
        Ok(law) => law.pmf.iter().sum::<f64>().clamp(0.0, 1.0),
        Err(_) => f64::NAN,
    }
}

/// `|f'(x)| <= a + b |x|` on the support of every law involved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthBound {
    pub a: f64,
    pub b: f64,
}

impl GrowthBound {
    pub fn bounded(a: f64) -> Self {
        Self { a, b: 0.0 }
    }

    pub fn linear(a: f64, b: f64) -> Self {
        Self { a, b }
    }
}

/// Lowest point reached by `Z_n` or by `α_n Z_{n-1} + G_n + δ_n`.
pub fn identity_support_floor(n: u64) -> Result<f64> {
    let c = CouponConstants::new(n)?;
    let zn = 1.0 - (n as f64).ln();
    let zp = 1.0 - ((n - 1) as f64).ln();
    Ok(zn.min(c.alpha_n * zp + 1.0 / n as f64 + c.delta_n))
}

/// How the two sides of the change-of-measure identity are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityMode {
    /// Truncated atom enumeration with a certified tail bound, for `n <= 4`.
    Enumerate { max_atoms: usize, tol: f64 },
    /// Independent Monte Carlo on each side.
    MonteCarlo { samples: u64, seed: u64 },
}

/// `E f'(Z_n)` and `K_n E[e^{-β_n Z_{n-1}} f'(α_n Z_{n-1} + G_n + δ_n)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentitySides {
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// Certified bound on the total truncation error (enumerate mode).
    pub truncation_bound: f64,
}

impl IdentitySides {
    pub fn difference(&self) -> f64 {
        (self.lhs.mean - self.rhs.mean).abs()
    }

    /// Agreement within `k` combined standard errors plus truncation and `abs_tol`.
    pub fn agree(&self, k: f64, abs_tol: f64) -> bool {
        self.difference()
            <= k * self.lhs.std_err.hypot(self.rhs.std_err) + self.truncation_bound + abs_tol
    }
}

/// `Σ_{k>K} n q^{k-1} (A + B k)` with `q = 1 - 1/n`, bounding
/// `E[A + B T_n; T_n > K]` through `P(T_n = k) <= P(T_n > k - 1)`.
fn linear_tail(n: u64, k: u64, a: f64, b: f64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let nf = n as f64;
    let q = 1.0 - 1.0 / nf;
    let p = 1.0 / nf;
    let kf = k as f64;
    nf * q.powf(kf) * ((a + b * (kf + 1.0)) / p + b * q / (p * p))
}

/// Smallest `K >= n` with `linear_tail(n, K, a, b) <= tol`.
fn linear_tail_index(n: u64, a: f64, b: f64, tol: f64, cap: u64) -> Option<u64> {
    let mut k = n.max(1);
    while linear_tail(n, k, a, b) > tol {
        if k > cap {
            return None;
        }
        k = (k + 1).max(k + k / 8);
    }
    // Walk back to the smallest index that still certifies.
    let mut lo = k / 2;
    let mut hi = k;
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if linear_tail(n, mid, a, b) <= tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi.max(n))
}

pub fn main_identity_sides<F>(
    n: u64,
    fprime: F,
    growth: GrowthBound,
    mode: IdentityMode,
    exec: Execution,
) -> Result<IdentitySides>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let c = CouponConstants::new(n)?;
    match mode {
        IdentityMode::Enumerate { max_atoms, tol } => {
            enumerate_identity(&c, &fprime, growth, max_atoms, tol)
        }
        IdentityMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return domain("need at least one sample");
            }
            monte_carlo_identity(&c, &fprime, samples, seed, exec)
        }
    }
}

fn enumerate_identity<F: Fn(f64) -> f64>(
    c: &CouponConstants,
    fprime: &F,
    growth: GrowthBound,
    max_atoms: usize,
    tol: f64,
) -> Result<IdentitySides> {
    let n = c.n;
    if n > 4 {
        return domain(format!("enumerate mode supports n <= 4, got {n}"));
    }
    if !(tol > 0.0) || !(growth.a >= 0.0 && growth.b >= 0.0) {
        return domain("enumeration needs tol > 0 and a non-negative growth bound");
    }
    let nf = n as f64;
    let np = (n - 1) as f64;
    let budget = |what: &str, atoms: u64| {
        Error::BudgetExceeded(format!(
            "{what} needs {atoms} atoms for tail {tol:e}, budget {max_atoms}"
        ))
    };
    let cap = (max_atoms as u64).saturating_mul(4) + 64;

    // Left side: |f'(z_k)| <= a + b ln n + (b/n) k.
    let (a, b) = (growth.a + growth.b * nf.ln(), growth.b / nf);
    let k_lhs =
        linear_tail_index(n, a, b, 0.25 * tol, cap).ok_or_else(|| budget("left side", cap))?;
    if k_lhs - n + 1 > max_atoms as u64 {
        return Err(budget("left side", k_lhs - n + 1));
    }
    let law_n = CollectorLaw::up_to(n, k_lhs)?;
    let lhs = law_n.expect(fprime);
    let lhs_tail = linear_tail(n, k_lhs, a, b);

    // Right side, outer sum over T_{n-1}.
    let weight_max = (-c.beta_n * (1.0 - np.ln())).exp();
    let a1 = growth.a + growth.b * (c.alpha_n * np.ln() + 1.0 + c.delta_n.abs());
    let b1 = growth.b * c.alpha_n / np;
    let scale = c.k_n * weight_max;
    let k_rhs = linear_tail_index(n - 1, a1, b1, 0.25 * tol / scale, cap)
        .ok_or_else(|| budget("right side", cap))?;
    let law_p = CollectorLaw::up_to(n - 1, k_rhs)?;
    let outer_tail = scale * linear_tail(n - 1, k_rhs, a1, b1);

    // Inner sum over n G_n = m ~ Geom(1/n):
    // Σ_{m>M} (1/n) q^{m-1} (a_k + (b/n) m) = q^M (a_k + b (M + n) / n).
    let q = c.alpha_n;
    let a_k_max =
        growth.a + growth.b * (c.alpha_n * (k_rhs as f64 / np + np.ln()) + c.delta_n.abs());
    let inner_tail = |m: u64| {
        let mf = m as f64;
        scale * q.powf(mf) * (a_k_max + growth.b * (mf + nf) / nf)
    };
    let mut m_max = n;
    while inner_tail(m_max) > 0.25 * tol {
        m_max += n;
        if m_max > cap {
            return Err(budget("right side", cap));
        }
    }
    let atoms = law_p.pmf().len() as u64 * m_max;
    if atoms > max_atoms as u64 {
        return Err(budget("right side", atoms));
    }
    let geom: Vec<f64> = (1..=m_max).map(|m| q.powi(m as i32 - 1) / nf).collect();
    let mut rhs = 0.0;
    for (_, z, p) in law_p.atoms() {
        let base = c.alpha_n * z + c.delta_n;
        let inner: f64 = geom
            .iter()
            .enumerate()
            .map(|(j, w)| w * fprime(base + (j + 1) as f64 / nf))
            .sum();
        rhs += p * (-c.beta_n * z).exp() * inner;
    }
    rhs *= c.k_n;
    Ok(IdentitySides {
        lhs: Estimate::exact(lhs),
        rhs: Estimate::exact(rhs),
        truncation_bound: lhs_tail + outer_tail + inner_tail(m_max),
    })
}

fn monte_carlo_identity<F: Fn(f64) -> f64 + Sync + Send>(
    c: &CouponConstants,
    fprime: &F,
    samples: u64,
    seed: u64,
    exec: Execution,
) -> Result<IdentitySides> {
    let n = c.n;
    let plan_n = CouplingPlan::new(n)?;
    let plan_p = if n > 2 {
        Some(CouplingPlan::new(n - 1)?)
    } else {
        None
    };
    let lambda = -(-1.0 / n as f64).ln_1p();
    let lhs = exec.monte_carlo(samples, seed, purpose::IDENTITY_LHS, |rng, len| {
        let mut m = Moments::default();
        for _ in 0..len {
            m.push(fprime(normalize(n, plan_n.sample_total(rng))));
        }
        m
    });
    let rhs = exec.monte_carlo(samples, seed, purpose::IDENTITY_RHS_Z, |rng, len| {
        // The geometric shift reads from its own stream, independent of Z_{n-1}.
        let mut g_rng = rng.derive(rng.stream_id() ^ (purpose::IDENTITY_RHS_G << 56));
        let mut m = Moments::default();
        for _ in 0..len {
            let t = plan_p.as_ref().map_or(1, |p| p.sample_total(rng));
            let z = normalize(n - 1, t);
            let g = ceil_ratio(g_rng.exponential(), lambda) as f64 / n as f64;
            m.push(c.k_n * (-c.beta_n * z).exp() * fprime(c.alpha_n * z + g + c.delta_n));
        }
        m
    });
    Ok(IdentitySides {
        lhs: merge(&lhs).estimate(),
        rhs: merge(&rhs).estimate(),
        truncation_bound: 0.0,
    })
}

/// Empirical counts of `T_n` from `samples` draws, as `(k_min, counts)`.
pub fn collector_histogram(
    n: u64,
    samples: u64,
    seed: u64,
    exec: Execution,
) -> Result<(u64, Vec<u64>)> {
    if n == 0 || samples == 0 {
        return domain("histogram needs n >= 1 and samples >= 1");
    }
    let plan = if n >= 2 {
        Some(CouplingPlan::new(n)?)
    } else {
        None
    };
    let batches = exec.monte_carlo(samples, seed, purpose::COLLECTOR, |rng, len| {
        (0..len)
            .map(|_| plan.as_ref().map_or(1, |p| p.sample_total(rng)))
            .collect::<Vec<u64>>()
    });
    Ok(histogram(batches.iter().flatten().copied()))
}

pub(crate) fn histogram(values: impl Iterator<Item = u64> + Clone) -> (u64, Vec<u64>) {
    let lo = values.clone().min().unwrap_or(0);
    let hi = values.clone().max().unwrap_or(0);
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for v in values {
        counts[(v - lo) as usize] += 1;
    }
    (lo, counts)
}
