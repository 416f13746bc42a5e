//! The Gumbel Markov semigroup
//!
//! ```text
//! P_t f(x) = E[ f( max(x - t, Z + ln(1 - e^{-t})) ) ],   Z ~ Gumbel(0, 1)
//! ```
//!
//! its generator, and the Stein identities built on them. Everything is
//! evaluated from closed forms plus deterministic quadrature. Writing
//! `γ_t = e^t - 1`, `S = γ_t e^{-x}`, `c = ln(1 - e^{-t})` and `p` for the
//! Gumbel density, the max splits into
//!
//! ```text
//! P_t f(x) = f(x - t) e^{-S} + ∫_{x-t}^∞ f(z) p(z - c) dz
//! (P_t f)'(x) = f'(x - t) e^{-S}
//! ```
//!
//! The second line is what keeps the generator of `P_t f` cheap: it needs
//! only `f'` and one integral.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gumbel::{gumbel_pdf, GumbelStd, TestFunction};
use crate::quad::{integrate_halfline, integrate_interval, integrate_left_tail, QuadConfig};

/// `t >= 0` together with `γ_t = e^t - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeConstant {
    pub t: f64,
    pub gamma_t: f64,
}

impl TimeConstant {
    pub fn new(t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return domain(format!("semigroup time must be non-negative, got {t}"));
        }
        Ok(Self {
            t,
            gamma_t: t.exp_m1(),
        })
    }
}

/// The three equivalent expressions of the generator `L0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorForm {
    /// `-f'(x) + e^{-x} E[f(x + Y) - f(x)]`
    JumpForm,
    /// `-f'(x) + e^{-x} E[f'(x + Y)]`
    ExpectationForm,
    /// `-f'(x) - e^{-x} f(x) + ∫_x^∞ e^{-z} f(z) dz`
    IntegralForm,
}

impl GeneratorForm {
    pub const ALL: [GeneratorForm; 3] = [
        GeneratorForm::JumpForm,
        GeneratorForm::ExpectationForm,
        GeneratorForm::IntegralForm,
    ];
}

/// Time-`t` parameters: `γ_t`, `ln γ_t` and the shift `ln(1 - e^{-t})`.
#[derive(Debug, Clone, Copy)]
struct Params {
    gamma: f64,
    ln_gamma: f64,
    shift: f64,
}

/// Evaluator for the semigroup, its generator and the Stein operators at a
/// fixed quadrature configuration.
#[derive(Debug, Clone, Copy)]
pub struct Semigroup {
    cfg: QuadConfig,
    gamma_scale: f64,
}

impl Default for Semigroup {
    fn default() -> Self {
        Self::new(QuadConfig::default())
    }
}

impl Semigroup {
    pub fn new(cfg: QuadConfig) -> Self {
        Self {
            cfg,
            gamma_scale: 1.0,
        }
    }

    /// Scales `γ_t` by `1 + eps`. Only meant for negative controls: a
    /// perturbed semigroup must fail the verification suites.
    #[doc(hidden)]
    pub fn with_gamma_perturbation(mut self, eps: f64) -> Self {
        self.gamma_scale = 1.0 + eps;
        self
    }

    pub fn config(&self) -> &QuadConfig {
        &self.cfg
    }

    fn params(&self, t: f64) -> Params {
        // ln γ_t = t + ln(1 - e^{-t}) avoids overflow of e^t for large t.
        let shift = (-(-t).exp_m1()).ln();
        let ln_gamma = t + shift + self.gamma_scale.ln();
        Params {
            gamma: t.exp_m1() * self.gamma_scale,
            ln_gamma,
            shift: ln_gamma - t,
        }
    }

    /// `∫_a^∞ g(z) p(z - shift) dz` with `p` the Gumbel density. Below
    /// `shift - 8` the density underflows to zero, so the range starts there.
    fn gumbel_weighted_from<G: Fn(f64) -> f64>(&self, g: G, a: f64, shift: f64) -> Result<f64> {
        let lo = a.max(shift - 8.0);
        integrate_halfline(
            |z: f64| {
                let w = gumbel_pdf(z - shift);
                if w == 0.0 {
                    0.0
                } else {
                    g(z) * w
                }
            },
            lo,
            &self.cfg,
        )
    }

    /// `P_t f(x)`.
    pub fn apply(&self, f: &TestFunction, t: f64, x: f64) -> Result<f64> {
        let tc = TimeConstant::new(t)?;
        if tc.t == 0.0 {
            return Ok(f.value(x));
        }
        let p = self.params(t);
        let s_max = (p.ln_gamma - x).exp();
        let stay = (-s_max).exp();
        let kept = if stay == 0.0 {
            0.0
        } else {
            f.value(x - t) * stay
        };
        // Writing s = e^{shift - z}: the jump integral is E[f(Z + shift); Z + shift > x - t].
        let jumped = self.gumbel_weighted_from(|z| f.value(z), x - t, p.shift)?;
        Ok(kept + jumped)
    }

    /// `(P_t f)'(x) = f'(x - t) exp(-γ_t e^{-x})`.
    pub fn derivative(&self, f: &TestFunction, t: f64, x: f64) -> Result<f64> {
        let tc = TimeConstant::new(t)?;
        if tc.t == 0.0 {
            return Ok(f.derivative(x));
        }
        let p = self.params(t);
        let stay = (-(p.ln_gamma - x).exp()).exp();
        Ok(if stay == 0.0 {
            0.0
        } else {
            f.derivative(x - t) * stay
        })
    }

    /// `P_t f(x) - μ(f)` as a single integral of a difference, so that the
    /// result keeps relative accuracy when it is small (large `t`).
    pub fn excess(&self, f: &TestFunction, t: f64, x: f64) -> Result<f64> {
        let tc = TimeConstant::new(t)?;
        if tc.t == 0.0 {
            let mean = GumbelStd.expect(|z| f.value(z), &self.cfg)?;
            return Ok(f.value(x) - mean);
        }
        let p = self.params(t);
        let knot = x - p.ln_gamma;
        let held = f.value(x - t);
        let half = self.cfg.with_abs_tol(0.5 * self.cfg.abs_tol);
        let left = integrate_left_tail(|z| (held - f.value(z)) * gumbel_pdf(z), knot, &half)?;
        let right = integrate_halfline(
            |z| (f.value(z + p.shift) - f.value(z)) * gumbel_pdf(z),
            knot,
            &half,
        )?;
        Ok(left + right)
    }

    /// `P_t f` as a new test function. Values come from quadrature (falling
    /// back to the best estimate if the budget runs out); the derivative is
    /// the closed form.
    pub fn evolve(&self, f: &TestFunction, t: f64) -> Result<TestFunction> {
        TimeConstant::new(t)?;
        let (sg, fv, fd) = (*self, f.clone(), f.clone());
        Ok(TestFunction::new(
            format!("P_{t}[{}]", f.name()),
            move |x| match sg.apply(&fv, t, x) {
                Ok(v) => v,
                Err(Error::NonConvergence { estimate, .. }) => estimate,
                Err(_) => f64::NAN,
            },
            move |x| sg.derivative(&fd, t, x).unwrap_or(f64::NAN),
            f.lip_f,
            f.lip_fprime + f.sup_fprime * (-1.0f64).exp(),
            f.sup_fprime,
        ))
    }

    /// `L0 f(x)` in the requested form.
    pub fn generator(&self, f: &TestFunction, x: f64, form: GeneratorForm) -> Result<f64> {
        let w = (-x).exp();
        match form {
            GeneratorForm::JumpForm => {
                let fx = f.value(x);
                let jump = integrate_halfline(
                    |y: f64| (-y).exp() * (f.value(x + y) - fx),
                    0.0,
                    &self.cfg,
                )?;
                Ok(-f.derivative(x) + w * jump)
            }
            GeneratorForm::ExpectationForm => {
                let e =
                    integrate_halfline(|y: f64| (-y).exp() * f.derivative(x + y), 0.0, &self.cfg)?;
                Ok(-f.derivative(x) + w * e)
            }
            GeneratorForm::IntegralForm => {
                let tail = integrate_halfline(|z: f64| (-z).exp() * f.value(z), x, &self.cfg)?;
                Ok(-f.derivative(x) - w * f.value(x) + tail)
            }
        }
    }

    /// `g_t(x) = ∫_x^∞ e^{-z} exp(-γ_t e^{-z}) h'(z - t) dz`, the jump part of
    /// `L0 P_t h`. Equivalently `e^{-x} E[exp(-γ_t e^{-(x+Y)}) h'(x + Y - t)]`.
    pub fn tail_kernel(&self, h: &TestFunction, t: f64, x: f64) -> Result<f64> {
        let tc = TimeConstant::new(t)?;
        if tc.t == 0.0 {
            return integrate_halfline(|z: f64| (-z).exp() * h.derivative(z), x, &self.cfg);
        }
        let p = self.params(t);
        // With z' = z - t the kernel is γ^{-1} times a Gumbel density centred at the shift.
        let cfg = Self {
            cfg: self.cfg.with_abs_tol(self.cfg.abs_tol * p.gamma),
            ..*self
        };
        let v = cfg.gumbel_weighted_from(|z| h.derivative(z), x - t, p.shift)?;
        Ok(v / p.gamma)
    }

    /// `L0 P_t h(x) = -(P_t h)'(x) + g_t(x)`.
    pub fn generator_of_evolved(&self, h: &TestFunction, t: f64, x: f64) -> Result<f64> {
        Ok(self.tail_kernel(h, t, x)? - self.derivative(h, t, x)?)
    }

    /// `|E f'(Z) - E[e^{-Z} f'(Z + Y)]|` for Gumbel `Z`, both sides by
    /// quadrature (the inner `Y` expectation nested in the outer one).
    pub fn stein_residual(&self, f: &TestFunction) -> Result<f64> {
        let cfg = self.cfg;
        self.stein_residual_with(f, |g| GumbelStd.expect(g, &cfg))
    }

    /// Stein residual under an arbitrary law, given by its expectation
    /// operator. Non-zero residuals witness that the law is not Gumbel.
    pub fn stein_residual_with<E>(&self, f: &TestFunction, expect: E) -> Result<f64>
    where
        E: Fn(&dyn Fn(f64) -> f64) -> Result<f64>,
    {
        let lhs = expect(&|x| f.derivative(x))?;
        let inner_err = std::cell::Cell::new(None);
        let rhs = expect(&|x| match integrate_halfline(
            |y: f64| (-y).exp() * f.derivative(x + y),
            0.0,
            &self.cfg,
        ) {
            Ok(v) => (-x).exp() * v,
            Err(e) => {
                inner_err.set(Some(e));
                f64::NAN
            }
        });
        if let Some(e) = inner_err.into_inner() {
            return Err(e);
        }
        Ok((lhs - rhs?).abs())
    }

    /// Solution of the Stein equation `L0 u = μ(h) - h`:
    /// `u(x) = ∫_0^∞ (P_t h(x) - μ(h)) dt`, integrated in `v = e^{-t}`.
    pub fn stein_solution(&self, h: &TestFunction, x: f64) -> Result<f64> {
        let failure = std::cell::Cell::new(None);
        let outer = integrate_interval(
            |v: f64| {
                let t = -v.ln();
                // Keep relative accuracy where the excess decays like e^{-t}.
                let inner = Self {
                    cfg: self.cfg.with_abs_tol((self.cfg.abs_tol * v).max(1e-15)),
                    ..*self
                };
                match inner.excess(h, t, x) {
                    Ok(d) => d / v,
                    Err(e) => {
                        failure.set(Some(e));
                        f64::NAN
                    }
                }
            },
            0.0,
            1.0,
            &self.cfg,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        outer
    }

    /// `u'(x) = ∫_0^∞ h'(x - t) exp(-γ_t e^{-x}) dt` for the Stein solution.
    pub fn stein_solution_derivative(&self, h: &TestFunction, x: f64) -> Result<f64> {
        integrate_halfline(
            |t: f64| self.derivative(h, t, x).unwrap_or(f64::NAN),
            0.0,
            &self.cfg,
        )
    }

    /// `|P_t f(x) - μ(f)|`.
    pub fn ergodic_gap(&self, f: &TestFunction, t: f64, x: f64) -> Result<f64> {
        Ok(self.excess(f, t, x)?.abs())
    }

    /// Whether `max_grid |L0 P_t f| <= 2 sup|f'| / (1 - e^{-t})`.
    pub fn sup_bound_check(&self, f: &TestFunction, t: f64, grid: &[f64]) -> Result<bool> {
        if !(t > 0.0) {
            return domain(format!("sup bound needs t > 0, got {t}"));
        }
        let bound = 2.0 * f.sup_fprime / -(-t).exp_m1();
        let mut worst: f64 = 0.0;
        for &x in grid {
            worst = worst.max(self.generator_of_evolved(f, t, x)?.abs());
        }
        Ok(worst <= bound)
    }
}

pub fn apply_semigroup(f: &TestFunction, t: f64, x: f64, cfg: &QuadConfig) -> Result<f64> {
    Semigroup::new(*cfg).apply(f, t, x)
}

pub fn semigroup_derivative(f: &TestFunction, t: f64, x: f64) -> Result<f64> {
    Semigroup::default().derivative(f, t, x)
}

pub fn generator(f: &TestFunction, x: f64, form: GeneratorForm, cfg: &QuadConfig) -> Result<f64> {
    Semigroup::new(*cfg).generator(f, x, form)
}

pub fn stein_residual(f: &TestFunction, cfg: &QuadConfig) -> Result<f64> {
    Semigroup::new(*cfg).stein_residual(f)
}

pub fn stein_solution(h: &TestFunction, x: f64, cfg: &QuadConfig) -> Result<f64> {
    Semigroup::new(*cfg).stein_solution(h, x)
}

pub fn generator_sup_bound_check(f: &TestFunction, t: f64, grid: &[f64]) -> Result<bool> {
    Semigroup::default().sup_bound_check(f, t, grid)
}

pub fn ergodic_gap(f: &TestFunction, t: f64, x: f64, cfg: &QuadConfig) -> Result<f64> {
    Semigroup::new(*cfg).ergodic_gap(f, t, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gumbel::EULER_GAMMA;

    fn sg() -> Semigroup {
        Semigroup::default()
    }

    #[test]
    fn time_constant() {
        let z = TimeConstant::new(0.0).unwrap();
        assert_eq!(z.gamma_t, 0.0);
        let one = TimeConstant::new(1.0).unwrap();
        assert!((one.gamma_t - (std::f64::consts::E - 1.0)).abs() < 1e-15);
        assert!(TimeConstant::new(-0.1).is_err());
    }

    #[test]
    fn identity_at_time_zero() {
        let f = TestFunction::sin();
        assert_eq!(sg().apply(&f, 0.0, 1.3).unwrap(), 1.3f64.sin());
    }

    #[test]
    fn constants_are_fixed() {
        let c = TestFunction::constant(2.5);
        for &t in &[0.1, 1.0, 7.0] {
            for &x in &[-3.0, 0.0, 4.0] {
                assert!((sg().apply(&c, t, x).unwrap() - 2.5).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn matches_monte_carlo_definition() {
        use crate::gumbel::gumbel_sample;
        use crate::rng::RngStream;
        let f = TestFunction::sin();
        let (t, x): (f64, f64) = (0.6, 0.4);
        let shift = (1.0 - (-t).exp()).ln();
        let mut rng = RngStream::new(3, 0);
        let n = 400_000;
        let mut m = crate::stats::Moments::default();
        for _ in 0..n {
            let z = gumbel_sample(&mut rng);
            m.push(f.value((x - t).max(z + shift)));
        }
        let est = m.estimate();
        let exact = sg().apply(&f, t, x).unwrap();
        assert!((est.mean - exact).abs() < 4.0 * est.std_err);
    }

    #[test]
    fn derivative_examples() {
        let id = TestFunction::identity();
        let v = sg().derivative(&id, 1.0, 0.0).unwrap();
        assert!((v - (-(std::f64::consts::E - 1.0)).exp()).abs() < 1e-15);
        assert!((v - 0.179_374).abs() < 1e-6);
        let s = TestFunction::sin();
        assert_eq!(sg().derivative(&s, 0.0, 0.7).unwrap(), 0.7f64.cos());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let f = TestFunction::sin();
        for &t in &[0.2, 1.0, 3.0] {
            for &x in &[-2.0, 0.0, 1.5] {
                let h = 1e-5 * f64::max(1.0, f64::abs(x));
                let fd = (sg().apply(&f, t, x + h).unwrap() - sg().apply(&f, t, x - h).unwrap())
                    / (2.0 * h);
                let d = sg().derivative(&f, t, x).unwrap();
                assert!((fd - d).abs() < 1e-7, "t={t} x={x}: {fd} vs {d}");
            }
        }
    }

    #[test]
    fn stationarity_of_exp_tilt() {
        let f = TestFunction::exp_neg();
        let s = sg();
        let lhs = GumbelStd
            .expect(|x| s.apply(&f, 0.7, x).unwrap(), &QuadConfig::default())
            .unwrap();
        assert!((lhs - 1.0).abs() < 1e-8, "{lhs}");
    }

    #[test]
    fn generator_examples() {
        let s = sg();
        for form in GeneratorForm::ALL {
            let id = s.generator(&TestFunction::identity(), 0.0, form).unwrap();
            assert!(id.abs() < 1e-12, "{form:?} {id}");
            let x = 0.8;
            let v = s.generator(&TestFunction::identity(), x, form).unwrap();
            assert!((v - (-1.0 + (-x).exp())).abs() < 1e-10);
            let e = s.generator(&TestFunction::exp_neg(), 0.0, form).unwrap();
            assert!((e - 0.5).abs() < 1e-10, "{form:?} {e}");
            let c = s
                .generator(&TestFunction::constant(3.0), 1.1, form)
                .unwrap();
            assert!(c.abs() < 1e-12);
        }
    }

    #[test]
    fn evolved_generator_matches_generic_forms() {
        let s = sg();
        let h = TestFunction::sin();
        for &t in &[0.3, 1.0, 2.5] {
            let ph = s.evolve(&h, t).unwrap();
            for &x in &[-1.5, 0.0, 2.0] {
                let closed = s.generator_of_evolved(&h, t, x).unwrap();
                let expect = s.generator(&ph, x, GeneratorForm::ExpectationForm).unwrap();
                let jump = s.generator(&ph, x, GeneratorForm::JumpForm).unwrap();
                assert!((closed - expect).abs() < 1e-9, "t={t} x={x}");
                assert!((closed - jump).abs() < 1e-8, "t={t} x={x}");
            }
        }
    }

    #[test]
    fn stein_residual_examples() {
        let s = sg();
        assert!(s.stein_residual(&TestFunction::identity()).unwrap() < 1e-10);
        assert!(s.stein_residual(&TestFunction::exp_neg()).unwrap() < 1e-10);
        let cfg = QuadConfig::default();
        let exponential =
            |g: &dyn Fn(f64) -> f64| integrate_halfline(|x: f64| g(x) * (-x).exp(), 0.0, &cfg);
        let r = s
            .stein_residual_with(&TestFunction::identity(), exponential)
            .unwrap();
        assert!((r - 0.5).abs() < 1e-10);
    }

    #[test]
    fn stein_solution_of_constant_vanishes() {
        let v = sg()
            .stein_solution(&TestFunction::constant(1.7), 0.3)
            .unwrap();
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn stein_solution_derivative_matches_finite_differences() {
        let s = sg();
        let h = TestFunction::identity();
        let x: f64 = 0.5;
        let step = 1e-5 * f64::max(1.0, x.abs());
        let fd = (s.stein_solution(&h, x + step).unwrap()
            - s.stein_solution(&h, x - step).unwrap())
            / (2.0 * step);
        let d = s.stein_solution_derivative(&h, x).unwrap();
        assert!((fd - d).abs() < 1e-5, "{fd} vs {d}");
    }

    #[test]
    fn ergodic_gap_examples() {
        let s = sg();
        let id = TestFunction::identity();
        assert!(s.ergodic_gap(&id, 20.0, 0.0).unwrap() < 1e-6);
        let c = TestFunction::constant(4.0);
        for &t in &[0.0, 1.0, 5.0] {
            assert!(s.ergodic_gap(&c, t, 0.5).unwrap() < 1e-12);
        }
        let gaps: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&t| s.ergodic_gap(&id, t, 2.0).unwrap())
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
        let direct = (s.apply(&id, 3.0, 0.5).unwrap() - EULER_GAMMA).abs();
        assert!((direct - s.ergodic_gap(&id, 3.0, 0.5).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn sup_bound_examples() {
        let grid: Vec<f64> = (0..=100).map(|i| -5.0 + 0.1 * i as f64).collect();
        let s = sg();
        assert!(s
            .sup_bound_check(&TestFunction::identity(), 1.0, &grid)
            .unwrap());
        assert!(s.sup_bound_check(&TestFunction::sin(), 0.1, &grid).unwrap());
        assert!(s
            .sup_bound_check(&TestFunction::constant(1.0), 0.5, &grid)
            .unwrap());
        assert!(s.sup_bound_check(&TestFunction::sin(), 0.0, &grid).is_err());
    }
}
