//! Distances between `law(Z_n)` and the Gumbel law, rate fitting, and the
//! generator-gap diagnostics `t ↦ E[L0 P_t h(Z_n)]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coupon::{
    normalize, purpose, CollectorLaw, CouplingPlan, CouponConstants, DEFAULT_TAIL_TOL,
};
use crate::error::{domain, Error, Result};
use crate::exec::Execution;
use crate::gumbel::{gumbel_cdf, GumbelStd, TestFunction};
use crate::quad::QuadConfig;
use crate::semigroup::Semigroup;
use crate::stats::{Estimate, Moments};

/// Width of the logistic smoothing applied to the ramps. With `s = 0.3`
/// the curvature stays below `1/(4s) < 1`, and two knots two apart add a
/// negligible amount on top.
const RAMP_WIDTH: f64 = 0.3;

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Smoothed ramp `s ln(1 + e^{x/s})`: 0 far left, `x` far right.
fn smooth_ramp(x: f64) -> f64 {
    RAMP_WIDTH * softplus(x / RAMP_WIDTH)
}

fn smooth_ramp_prime(x: f64) -> f64 {
    logistic(x / RAMP_WIDTH)
}

/// A finite family of test functions with `Lip[2]` norm at most one.
#[derive(Debug, Clone)]
pub struct Dictionary {
    entries: Vec<TestFunction>,
}

impl Dictionary {
    pub fn new(entries: Vec<TestFunction>) -> Result<Self> {
        if entries.is_empty() {
            return domain("dictionary must not be empty");
        }
        if let Some(f) = entries.iter().find(|f| !(f.lip2_norm() <= 1.0)) {
            return domain(format!(
                "dictionary entry {} has Lip2 norm {} > 1",
                f.name(),
                f.lip2_norm()
            ));
        }
        Ok(Self { entries })
    }

    /// Twelve functions: the identity, `sin`, `cos`, `sin(2x)/4`, `cos(2x)/4`,
    /// a clamped `e^{-x}`, four smoothed plateaus, a smoothed ramp and softplus.
    pub fn standard() -> Self {
        let mut e = vec![
            TestFunction::identity(),
            TestFunction::sin(),
            TestFunction::cos(),
            TestFunction::new(
                "sin2x/4",
                |x: f64| 0.25 * (2.0 * x).sin(),
                |x: f64| 0.5 * (2.0 * x).cos(),
                0.5,
                1.0,
                0.5,
            ),
            TestFunction::new(
                "cos2x/4",
                |x: f64| 0.25 * (2.0 * x).cos(),
                |x: f64| -0.5 * (2.0 * x).sin(),
                0.5,
                1.0,
                0.5,
            ),
            TestFunction::new(
                // e^{-x} on the right, slope -1 on the left, smooth throughout.
                "exp_neg_clamped",
                |x: f64| softplus(-x),
                |x: f64| -logistic(-x),
                1.0,
                0.25,
                1.0,
            ),
        ];
        for (a, b) in [(-2.0, 0.0), (-1.0, 1.0), (0.0, 2.0), (1.0, 3.0)] {
            e.push(TestFunction::new(
                format!("plateau[{a},{b}]"),
                move |x| smooth_ramp(x - a) - smooth_ramp(x - b),
                move |x| smooth_ramp_prime(x - a) - smooth_ramp_prime(x - b),
                1.0,
                1.0,
                1.0,
            ));
        }
        e.push(TestFunction::new(
            "ramp",
            smooth_ramp,
            smooth_ramp_prime,
            1.0,
            1.0,
            1.0,
        ));
        e.push(TestFunction::new(
            "softplus", softplus, logistic, 1.0, 0.25, 1.0,
        ));
        Self { entries: e }
    }

    pub fn entries(&self) -> &[TestFunction] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, f: TestFunction) -> Result<()> {
        if !(f.lip2_norm() <= 1.0) {
            return domain(format!("entry {} has Lip2 norm above 1", f.name()));
        }
        self.entries.push(f);
        Ok(())
    }

    /// Gumbel means of every entry.
    pub fn gumbel_means(&self, cfg: &QuadConfig) -> Result<Vec<f64>> {
        self.entries
            .iter()
            .map(|f| GumbelStd.expect(|x| f.value(x), cfg))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Kolmogorov,
    DictLip2,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Kolmogorov => "kolmogorov",
            Metric::DictLip2 => "dict_lip2",
        })
    }
}

/// Distances per `n` with the fit `d_n ≈ C ln n / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub n_values: Vec<u64>,
    pub distances: Vec<f64>,
    pub metric: Metric,
    pub fit_constant: f64,
    pub fit_exponent: f64,
    pub max_residual: f64,
}

pub const CSV_HEADER: &str = "n,metric,distance,log_n_over_n,fitted_constant,fit_exponent";

impl DistanceReport {
    /// Header plus one row per `n`, numbers with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for (&n, &d) in self.n_values.iter().zip(&self.distances) {
            let nf = n as f64;
            out.push_str(&format!(
                "{n},{},{d:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.metric,
                nf.ln() / nf,
                self.fit_constant,
                self.fit_exponent
            ));
        }
        out
    }

    /// Largest over smallest of `d_n n / ln n`.
    pub fn band_ratio(&self) -> f64 {
        let scaled: Vec<f64> = self
            .n_values
            .iter()
            .zip(&self.distances)
            .map(|(&n, &d)| d * n as f64 / (n as f64).ln())
            .collect();
        let hi = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

/// Least-squares fit of `d_n = C ln n / n`, plus the slope of `ln d_n`
/// against `ln(ln n / n)`.
pub fn rate_fit(metric: Metric, n_values: &[u64], distances: &[f64]) -> Result<DistanceReport> {
    if n_values.len() != distances.len() {
        return domain("n_values and distances differ in length");
    }
    if n_values.len() < 4 {
        return Err(Error::DegenerateInput(format!(
            "rate fit needs at least 4 points, got {}",
            n_values.len()
        )));
    }
    if n_values[0] < 2 || n_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateInput(
            "n values must start at 2 or more and increase strictly".into(),
        ));
    }
    if distances.iter().any(|d| !(*d >= 0.0)) {
        return domain("distances must be finite and non-negative");
    }
    if distances.iter().all(|&d| d == 0.0) {
        return Err(Error::DegenerateInput("all distances are zero".into()));
    }
    let xs: Vec<f64> = n_values
        .iter()
        .map(|&n| (n as f64).ln() / n as f64)
        .collect();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxd: f64 = xs.iter().zip(distances).map(|(x, d)| x * d).sum();
    let c = sxd / sxx;
    let max_residual = xs
        .iter()
        .zip(distances)
        .map(|(x, d)| (d - c * x).abs())
        .fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(distances)
        .filter(|(_, &d)| d > 0.0)
        .map(|(x, d)| (x.ln(), d.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateInput(
            "fewer than two positive distances".into(),
        ));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx_c: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(DistanceReport {
        n_values: n_values.to_vec(),
        distances: distances.to_vec(),
        metric,
        fit_constant: c,
        fit_exponent: sxy / sxx_c,
        max_residual,
    })
}

/// `sup_x |P(Z_n <= x) - e^{-e^{-x}}|`, exact up to the tail tolerance.
///
/// Between atoms the CDF of `Z_n` is flat, so the supremum is attained at
/// an atom `z_k` either from the left or from the right. `window` fixes the
/// atom range `[k_min, k_max]` of `T_n`; it must leave at most `1e-12` mass
/// of `T_n` on each side, otherwise `WindowTooSmall` is returned. `None`
/// picks a certified window automatically.
pub fn kolmogorov_distance(n: u64, window: Option<(u64, u64)>) -> Result<f64> {
    let tol = DEFAULT_TAIL_TOL;
    let (law, below) = match window {
        None => {
            let law = CollectorLaw::exact(n, tol)?;
            let below = law.mass_below();
            (law, below)
        }
        Some((k_min, k_max)) => {
            if k_max < k_min {
                return domain(format!("empty window [{k_min}, {k_max}]"));
            }
            let full = CollectorLaw::up_to(n, k_max)?;
            let below: f64 = (full.k_min()..k_min.max(full.k_min()))
                .map(|k| full.prob(k))
                .sum();
            let above = full.mass_above();
            if below > tol || above > tol {
                return Err(Error::WindowTooSmall {
                    k_min,
                    k_max,
                    tail: below.max(above),
                });
            }
            (full, below)
        }
    };
    let k_start = match window {
        Some((k_min, _)) => k_min.max(law.k_min()),
        None => law.k_min(),
    };
    let mut cdf = below;
    let mut sup = below;
    for (k, z, p) in law.atoms() {
        if k < k_start {
            continue;
        }
        let g = gumbel_cdf(z);
        sup = sup.max((cdf - g).abs());
        cdf += p;
        sup = sup.max((cdf - g).abs());
    }
    Ok(sup.max(1.0 - cdf))
}

/// How the law of `Z_n` is integrated against test functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawMode {
    /// Exact atoms of `T_n`, tails below `tail_tol` dropped.
    ExactAtoms {
        tail_tol: f64,
        max_atoms: usize,
    },
    MonteCarlo {
        samples: u64,
        seed: u64,
    },
}

impl LawMode {
    pub fn exact() -> Self {
        LawMode::ExactAtoms {
            tail_tol: DEFAULT_TAIL_TOL,
            max_atoms: 1 << 24,
        }
    }
}

/// `(T, weight)` pairs: exact probabilities or empirical frequencies.
fn weighted_atoms(n: u64, mode: LawMode, exec: Execution) -> Result<Vec<(u64, f64)>> {
    match mode {
        LawMode::ExactAtoms {
            tail_tol,
            max_atoms,
        } => {
            let law = CollectorLaw::exact(n, tail_tol)?;
            if law.pmf().len() > max_atoms {
                return Err(Error::BudgetExceeded(format!(
                    "law of T_{n} has {} atoms, budget {max_atoms}",
                    law.pmf().len()
                )));
            }
            Ok(law.atoms().map(|(k, _, p)| (k, p)).collect())
        }
        LawMode::MonteCarlo { samples, seed } => {
            let (lo, counts) = crate::coupon::collector_histogram(n, samples, seed, exec)?;
            let total = samples as f64;
            Ok(counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(j, &c)| (lo + j as u64, c as f64 / total))
                .collect())
        }
    }
}

/// `|E f(Z_n) - μ(f)|` per dictionary entry.
pub fn dict_gaps(
    n: u64,
    dict: &Dictionary,
    mode: LawMode,
    cfg: &QuadConfig,
    exec: Execution,
) -> Result<Vec<f64>> {
    if n == 0 {
        return domain("dict_distance needs n >= 1");
    }
    let atoms = weighted_atoms(n, mode, exec)?;
    let means = dict.gumbel_means(cfg)?;
    Ok(dict
        .entries()
        .iter()
        .zip(means)
        .map(|(f, mu)| {
            let e: f64 = atoms
                .iter()
                .map(|&(k, w)| w * f.value(normalize(n, k)))
                .sum();
            (e - mu).abs()
        })
        .collect())
}

/// Largest dictionary gap: a lower bound on the `Lip[2]` distance.
pub fn dict_distance(
    n: u64,
    dict: &Dictionary,
    mode: LawMode,
    cfg: &QuadConfig,
    exec: Execution,
) -> Result<f64> {
    Ok(dict_gaps(n, dict, mode, cfg, exec)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Distances for every `n` (in parallel across `n`) followed by the rate fit.
pub fn distance_report(
    metric: Metric,
    n_values: &[u64],
    mode: LawMode,
    cfg: &QuadConfig,
    exec: Execution,
) -> Result<DistanceReport> {
    let dict = Dictionary::standard();
    let d: Result<Vec<f64>> = exec
        .map_slice(n_values, |&n| match metric {
            Metric::Kolmogorov => kolmogorov_distance(n, None),
            Metric::DictLip2 => dict_distance(n, &dict, mode, cfg, Execution::Sequential),
        })
        .into_iter()
        .collect();
    rate_fit(metric, n_values, &d?)
}

/// One point of the gap profile with its decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub t: f64,
    /// `E[L0 P_t h(Z_n)]`
    pub gap: Estimate,
    /// `(1 - K_n) E[g_n(Z_{n-1})]`
    pub a1: Estimate,
    /// `E[g(Z_n)] - E[g(Z_{n-1})]`
    pub a2: Estimate,
    /// `E[g(Z_{n-1})] - E[g_n(Z_{n-1})]`
    pub a3: Estimate,
    /// `gap - (a1 + a2 + a3)`, zero in expectation.
    pub defect: Estimate,
}

/// Envelope shape: 1 on `[0, 1]`, `(1 + |ln γ_t|) / γ_t` beyond.
pub fn envelope_shape(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else {
        let g = t.exp_m1();
        (1.0 + g.ln().abs()) / g
    }
}

/// `C` such that `|gap(t)| <= C shape(t) ln n / n` with equality somewhere.
pub fn calibrate_envelope(n: u64, points: &[GapPoint]) -> f64 {
    let rate = (n as f64).ln() / n as f64;
    points
        .iter()
        .map(|p| p.gap.mean.abs() / (envelope_shape(p.t) * rate))
        .fold(0.0, f64::max)
}

/// `slack C shape(t) ln n / n`.
pub fn envelope(n: u64, c_hat: f64, slack: f64, t: f64) -> f64 {
    let nf = n as f64;
    slack * c_hat * envelope_shape(t) * nf.ln() / nf
}

/// Grid points whose gap exceeds the envelope by more than `k_se` standard errors.
pub fn envelope_violations(
    n: u64,
    c_hat: f64,
    slack: f64,
    k_se: f64,
    points: &[GapPoint],
) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.gap.mean.abs() > envelope(n, c_hat, slack, p.t) + k_se * p.gap.std_err)
        .map(|(i, _)| i)
        .collect()
}

/// `g_n(x) = e^{-β x} E[(P_t h)'(α x + G_n + δ)]` with `n G_n ~ Geom(1/n)`,
/// the series cut where the neglected geometric mass times `sup|h'|` is below `1e-15`.
struct GnKernel {
    c: CouponConstants,
    terms: u64,
}

impl GnKernel {
    fn new(c: CouponConstants, sup_fprime: f64) -> Self {
        let need = (sup_fprime.max(1e-300) / 1e-15).ln().max(1.0);
        let terms = (need / -c.alpha_n.ln()).ceil() as u64 + 1;
        Self { c, terms }
    }

    fn eval(&self, h: &TestFunction, t: f64, x: f64) -> f64 {
        let c = &self.c;
        let nf = c.n as f64;
        let gamma = t.exp_m1();
        let base = c.alpha_n * x + c.delta_n;
        let step = (-1.0 / nf).exp();
        let mut e = (-(base + 1.0 / nf)).exp();
        let mut w = 1.0 / nf;
        let mut arg = base + 1.0 / nf;
        let mut sum = 0.0;
        for _ in 0..self.terms {
            sum += w * (-gamma * e).exp() * h.derivative(arg - t);
            w *= c.alpha_n;
            e *= step;
            arg += 1.0 / nf;
        }
        (-c.beta_n * x).exp() * sum
    }
}

/// Per-atom values needed for one `t`.
struct AtomTables {
    /// `g(z)` and `(P_t h)'(z)` on the atoms of `T_n`.
    g_curr: Vec<f64>,
    d_curr: Vec<f64>,
    /// `g(z)` and `g_n(z)` on the atoms of `T_{n-1}`.
    g_prev: Vec<f64>,
    gn_prev: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn tables(
    sg: &Semigroup,
    kernel: &GnKernel,
    h: &TestFunction,
    t: f64,
    n: u64,
    curr: &[u64],
    prev: &[u64],
    exec: Execution,
) -> Result<AtomTables> {
    let cur: Result<Vec<(f64, f64)>> = exec
        .map_slice(curr, |&k| {
            let z = normalize(n, k);
            Ok((sg.tail_kernel(h, t, z)?, sg.derivative(h, t, z)?))
        })
        .into_iter()
        .collect();
    let pre: Result<Vec<(f64, f64)>> = exec
        .map_slice(prev, |&k| {
            let z = normalize(n - 1, k);
            Ok((sg.tail_kernel(h, t, z)?, kernel.eval(h, t, z)))
        })
        .into_iter()
        .collect();
    let (g_curr, d_curr) = cur?.into_iter().unzip();
    let (g_prev, gn_prev) = pre?.into_iter().unzip();
    Ok(AtomTables {
        g_curr,
        d_curr,
        g_prev,
        gn_prev,
    })
}

/// Profile `E[L0 P_t h(Z_n)]` together with the decomposition
/// `A1 + A2 + A3` at every `t` of the grid.
///
/// In Monte Carlo mode the pairs `(Z_{n-1}, Z_n)` come from the coupling, so
/// `A2` and the defect are estimated from paired differences. The closed
/// forms are evaluated once per distinct atom.
pub fn gap_decomposition(
    n: u64,
    h: &TestFunction,
    t_grid: &[f64],
    mode: LawMode,
    cfg: &QuadConfig,
    exec: Execution,
) -> Result<Vec<GapPoint>> {
    let c = CouponConstants::new(n)?;
    if let Some(t) = t_grid.iter().find(|t| !(**t >= 0.0)) {
        return domain(format!("profile times must be non-negative, got {t}"));
    }
    if !h.sup_fprime.is_finite() {
        return domain(format!("{} needs a bounded derivative", h.name()));
    }
    let sg = Semigroup::new(*cfg);
    let kernel = GnKernel::new(c, h.sup_fprime);
    match mode {
        LawMode::ExactAtoms { .. } => {
            let curr = weighted_atoms(n, mode, exec)?;
            let prev = weighted_atoms(n - 1, mode, exec)?;
            let ck: Vec<u64> = curr.iter().map(|a| a.0).collect();
            let pk: Vec<u64> = prev.iter().map(|a| a.0).collect();
            t_grid
                .iter()
                .map(|&t| {
                    let tb = tables(&sg, &kernel, h, t, n, &ck, &pk, exec)?;
                    let dot = |w: &[(u64, f64)], v: &[f64]| -> f64 {
                        w.iter().zip(v).map(|(a, x)| a.1 * x).sum()
                    };
                    let eg_c = dot(&curr, &tb.g_curr);
                    let ed_c = dot(&curr, &tb.d_curr);
                    let eg_p = dot(&prev, &tb.g_prev);
                    let egn_p = dot(&prev, &tb.gn_prev);
                    let gap = eg_c - ed_c;
                    let a1 = (1.0 - c.k_n) * egn_p;
                    let a2 = eg_c - eg_p;
                    let a3 = eg_p - egn_p;
                    Ok(GapPoint {
                        t,
                        gap: Estimate::exact(gap),
                        a1: Estimate::exact(a1),
                        a2: Estimate::exact(a2),
                        a3: Estimate::exact(a3),
                        defect: Estimate::exact(gap - (a1 + a2 + a3)),
                    })
                })
                .collect()
        }
        LawMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return domain("need at least one sample");
            }
            let plan = CouplingPlan::new(n)?;
            let pairs: Vec<(u64, u64)> = exec
                .monte_carlo(samples, seed, purpose::COUPLED, |rng, len| {
                    (0..len)
                        .map(|_| plan.sample_totals(rng))
                        .collect::<Vec<_>>()
                })
                .into_iter()
                .flatten()
                .collect();
            let (p_lo, p_counts) = crate::coupon::histogram(pairs.iter().map(|p| p.0));
            let (c_lo, c_counts) = crate::coupon::histogram(pairs.iter().map(|p| p.1));
            let present = |lo: u64, counts: &[u64]| -> Vec<u64> {
                counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(j, _)| lo + j as u64)
                    .collect()
            };
            let ck = present(c_lo, &c_counts);
            let pk = present(p_lo, &p_counts);
            // Dense index from value to table slot.
            let slot = |lo: u64, keys: &[u64], len: usize| {
                let mut s = vec![usize::MAX; len];
                for (i, &k) in keys.iter().enumerate() {
                    s[(k - lo) as usize] = i;
                }
                s
            };
            let c_slot = slot(c_lo, &ck, c_counts.len());
            let p_slot = slot(p_lo, &pk, p_counts.len());
            t_grid
                .iter()
                .map(|&t| {
                    let tb = tables(&sg, &kernel, h, t, n, &ck, &pk, exec)?;
                    let mut m = [Moments::default(); 5];
                    for &(tp, tc) in &pairs {
                        let i = c_slot[(tc - c_lo) as usize];
                        let j = p_slot[(tp - p_lo) as usize];
                        let (g_c, d_c) = (tb.g_curr[i], tb.d_curr[i]);
                        let (g_p, gn_p) = (tb.g_prev[j], tb.gn_prev[j]);
                        let gap = g_c - d_c;
                        let a1 = (1.0 - c.k_n) * gn_p;
                        let a2 = g_c - g_p;
                        let a3 = g_p - gn_p;
                        m[0].push(gap);
                        m[1].push(a1);
                        m[2].push(a2);
                        m[3].push(a3);
                        m[4].push(gap - (a1 + a2 + a3));
                    }
                    Ok(GapPoint {
                        t,
                        gap: m[0].estimate(),
                        a1: m[1].estimate(),
                        a2: m[2].estimate(),
                        a3: m[3].estimate(),
                        defect: m[4].estimate(),
                    })
                })
                .collect()
        }
    }
}

/// `E[L0 P_t h(Z_n)]` over the grid.
pub fn gap_profile(
    n: u64,
    h: &TestFunction,
    t_grid: &[f64],
    mode: LawMode,
    cfg: &QuadConfig,
    exec: Execution,
) -> Result<Vec<Estimate>> {
    Ok(gap_decomposition(n, h, t_grid, mode, cfg, exec)?
        .into_iter()
        .map(|p| p.gap)
        .collect())
}

/// `(A1, A2, A3)` at a single time.
pub fn decomposition_terms(
    n: u64,
    h: &TestFunction,
    t: f64,
    mode: LawMode,
    cfg: &QuadConfig,
    exec: Execution,
) -> Result<(Estimate, Estimate, Estimate)> {
    let p = gap_decomposition(n, h, &[t], mode, cfg, exec)?[0];
    Ok((p.a1, p.a2, p.a3))
}

/// Default time grid: `0, 0.1, ..., 1` then `1.5, 2, 3, 4, 5, 6, 8, 10`.
pub fn default_t_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    g.extend([1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0]);
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gumbel::EULER_GAMMA;

    #[test]
    fn standard_dictionary_has_twelve_unit_entries() {
        let d = Dictionary::standard();
        assert_eq!(d.len(), 12);
        assert!(d.entries().iter().all(|f| f.lip2_norm() <= 1.0));
        assert!(Dictionary::new(vec![]).is_err());
        assert!(Dictionary::new(vec![TestFunction::identity().scaled(2.0)]).is_err());
    }

    #[test]
    fn dictionary_lipschitz_spot_check() {
        let mut rng = crate::rng::RngStream::new(8, 0);
        for f in Dictionary::standard().entries() {
            for _ in 0..2000 {
                let x = 16.0 * rng.uniform() - 8.0;
                let y = 16.0 * rng.uniform() - 8.0;
                let dx = (x - y).abs();
                assert!(
                    (f.value(x) - f.value(y)).abs() <= f.lip_f * dx + 1e-12,
                    "{}",
                    f.name()
                );
                assert!(
                    (f.derivative(x) - f.derivative(y)).abs() <= f.lip_fprime * dx + 1e-12,
                    "{}",
                    f.name()
                );
                let h = 1e-5 * x.abs().max(1.0);
                let fd = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
                assert!((fd - f.derivative(x)).abs() < 1e-6, "{} at {x}", f.name());
            }
        }
    }

    #[test]
    fn kolmogorov_n1() {
        let d = kolmogorov_distance(1, None).unwrap();
        assert!((d - (-(-1.0f64).exp()).exp()).abs() < 1e-15);
        assert!((d - 0.692_201).abs() < 1e-6);
    }

    #[test]
    fn kolmogorov_windows() {
        let auto = kolmogorov_distance(2, None).unwrap();
        let manual = kolmogorov_distance(2, Some((2, 200))).unwrap();
        assert!((auto - manual).abs() < 1e-12);
        assert!(auto > 0.0 && auto < 1.0);
        assert!(matches!(
            kolmogorov_distance(2, Some((2, 10))),
            Err(Error::WindowTooSmall { .. })
        ));
        assert!(matches!(
            kolmogorov_distance(40, Some((200, 2000))),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn dict_distance_examples() {
        let cfg = QuadConfig::default();
        let id = Dictionary::new(vec![TestFunction::identity()]).unwrap();
        let exec = Execution::Sequential;
        let d2 = dict_distance(2, &id, LawMode::exact(), &cfg, exec).unwrap();
        assert!((d2 - (1.5 - 2f64.ln() - EULER_GAMMA).abs()).abs() < 1e-10);
        assert!((d2 - 0.229_637).abs() < 1e-6);
        let d1 = dict_distance(1, &id, LawMode::exact(), &cfg, exec).unwrap();
        assert!((d1 - (1.0 - EULER_GAMMA)).abs() < 1e-10);
        let zero = Dictionary::new(vec![TestFunction::constant(0.0)]).unwrap();
        assert_eq!(
            dict_distance(7, &zero, LawMode::exact(), &cfg, exec).unwrap(),
            0.0
        );
    }

    #[test]
    fn rate_fit_examples() {
        let ns = [16u64, 64, 256, 1024, 4096];
        let exact: Vec<f64> = ns
            .iter()
            .map(|&n| 3.0 * (n as f64).ln() / n as f64)
            .collect();
        let r = rate_fit(Metric::Kolmogorov, &ns, &exact).unwrap();
        assert!((r.fit_constant - 3.0).abs() < 1e-12);
        assert!((r.fit_exponent - 1.0).abs() < 1e-12);
        assert!(r.max_residual < 1e-15);
        let fast: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
        assert!(rate_fit(Metric::DictLip2, &ns, &fast).unwrap().fit_exponent > 1.0);
        assert!(matches!(
            rate_fit(Metric::Kolmogorov, &ns[..3], &exact[..3]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            rate_fit(Metric::Kolmogorov, &ns, &[0.0; 5]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let r = rate_fit(Metric::Kolmogorov, &[2, 3, 4, 5], &[0.5, 0.4, 0.3, 0.2]).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("2,kolmogorov,5.0000000000000000e-1,"));
    }

    #[test]
    fn envelope_shape_is_continuous_enough() {
        assert_eq!(envelope_shape(0.3), 1.0);
        assert!(envelope_shape(10.0) < 1e-3);
    }

    #[test]
    fn constant_h_has_zero_profile() {
        let cfg = QuadConfig::default();
        let c = TestFunction::constant(2.0);
        let pts = gap_decomposition(
            5,
            &c,
            &[0.0, 1.0, 3.0],
            LawMode::exact(),
            &cfg,
            Execution::Sequential,
        )
        .unwrap();
        for p in pts {
            for e in [p.gap, p.a1, p.a2, p.a3] {
                assert_eq!(e.mean, 0.0);
            }
        }
    }

    #[test]
    fn exact_decomposition_sums_to_gap() {
        let cfg = QuadConfig::default();
        let h = TestFunction::identity();
        let pts = gap_decomposition(
            6,
            &h,
            &[0.0, 0.5, 2.0],
            LawMode::exact(),
            &cfg,
            Execution::Sequential,
        )
        .unwrap();
        for p in pts {
            assert!(p.defect.mean.abs() < 1e-9, "{p:?}");
        }
    }
}
