use gumbel_stein::coupon::{
    identity_support_floor, main_identity_sides, GrowthBound, IdentityMode,
};
use gumbel_stein::distance::{
    calibrate_envelope, default_t_grid, dict_distance, envelope, envelope_violations,
    gap_decomposition, kolmogorov_distance, rate_fit, Dictionary, LawMode, Metric, CSV_HEADER,
};
use gumbel_stein::{Execution, GeneratorForm, GumbelStd, QuadConfig, Semigroup, TestFunction};

use crate::report::Table;
use crate::{CliError, CliResult, Common, IdentityModeArg, LawModeArg, MetricArg, NGrid};

/// Worst case of one suite.
struct Suite {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    case: String,
}

impl Suite {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: 0.0,
            case: String::new(),
        }
    }

    fn record(&mut self, defect: f64, case: impl FnOnce() -> String) {
        // A NaN defect is the worst case and stays so.
        if self.worst.is_nan() {
            return;
        }
        if defect.is_nan() || defect > self.worst {
            self.worst = defect;
            self.case = case();
        }
    }

    fn merge(&mut self, other: Suite) {
        if !self.worst.is_nan() && (other.worst.is_nan() || other.worst > self.worst) {
            self.worst = other.worst;
            self.case = other.case;
        }
    }

    fn pass(&self) -> bool {
        self.worst < self.tolerance
    }
}

/// Emits the suite table and a one-line summary per suite; true iff all pass.
fn finish(common: &Common, suites: &[Suite]) -> CliResult<bool> {
    let mut table = Table::new(&["suite", "max_defect", "tolerance", "pass", "worst_case"]);
    for s in suites {
        table.push(vec![
            s.name.into(),
            s.worst.into(),
            s.tolerance.into(),
            s.pass().into(),
            s.case.clone().into(),
        ]);
        let status = if s.pass() { "PASS" } else { "FAIL" };
        eprintln!(
            "{status} {}: max defect {:.3e} (tolerance {:.1e}){}",
            s.name,
            s.worst,
            s.tolerance,
            if s.pass() {
                String::new()
            } else {
                format!(" at {}", s.case)
            }
        );
    }
    table.emit(common.format, common.out.as_deref())?;
    Ok(suites.iter().all(Suite::pass))
}

fn x_grid() -> Vec<f64> {
    (0..=20).map(|i| -5.0 + 0.5 * i as f64).collect()
}

fn check_times(times: &[f64]) -> CliResult<()> {
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(CliError::Config(
            "--t needs a non-empty list of finite times >= 0".into(),
        ));
    }
    Ok(())
}

/// Runs `f` per dictionary entry, in parallel when available, and merges the
/// per-entry suites in dictionary order.
fn per_entry<F>(dict: &Dictionary, name: &'static str, tol: f64, f: F) -> CliResult<Suite>
where
    F: Fn(&TestFunction, &mut Suite) -> gumbel_stein::Result<()> + Sync + Send,
{
    let parts = Execution::default().map_slice(dict.entries(), |e| {
        let mut s = Suite::new(name, tol);
        f(e, &mut s).map(|_| s)
    });
    let mut total = Suite::new(name, tol);
    for p in parts {
        total.merge(p?);
    }
    Ok(total)
}

pub fn verify_semigroup(common: &Common, times: &[f64], perturb: Option<f64>) -> CliResult<bool> {
    check_times(times)?;
    let cfg = common.quad()?;
    let mut sg = Semigroup::new(cfg);
    if let Some(eps) = perturb {
        sg = sg.with_gamma_perturbation(eps);
    }
    let dict = Dictionary::standard();
    let xs = x_grid();

    let law = per_entry(&dict, "semigroup_law", 1e-6, |f, s| {
        for &u in times {
            let pu = sg.evolve(f, u)?;
            for &t in times {
                for &x in &xs {
                    let d = (sg.apply(&pu, t, x)? - sg.apply(f, t + u, x)?).abs();
                    s.record(d, || format!("{} t={t} s={u} x={x}", f.name()));
                }
            }
        }
        Ok(())
    })?;

    let stationarity = per_entry(&dict, "stationarity", 1e-8, |f, s| {
        let mu = GumbelStd.expect(|x| f.value(x), &cfg)?;
        for &t in times {
            let m = expect_fallible(|x| sg.apply(f, t, x), &cfg)?;
            s.record((m - mu).abs(), || format!("{} t={t}", f.name()));
        }
        Ok(())
    })?;

    // Far beyond the mixing time every starting point has forgotten itself.
    let horizon = 25.0;
    let ergodicity = per_entry(&dict, "ergodicity", 1e-6, |f, s| {
        let mu = GumbelStd.expect(|x| f.value(x), &cfg)?;
        for &x in &xs {
            let d = (sg.apply(f, horizon, x)? - mu).abs();
            s.record(d, || format!("{} t={horizon} x={x}", f.name()));
        }
        Ok(())
    })?;

    let h = 1e-4;
    let derivative = per_entry(&dict, "derivative", 1e-5, |f, s| {
        for &t in times {
            for &x in &xs {
                let fd = (sg.apply(f, t, x + h)? - sg.apply(f, t, x - h)?) / (2.0 * h);
                let d = (fd - sg.derivative(f, t, x)?).abs();
                s.record(d, || format!("{} t={t} x={x}", f.name()));
            }
        }
        Ok(())
    })?;

    let forms = per_entry(&dict, "generator_forms", 1e-8, |f, s| {
        for &x in &xs {
            let v = GeneratorForm::ALL
                .iter()
                .map(|&k| sg.generator(f, x, k))
                .collect::<gumbel_stein::Result<Vec<f64>>>()?;
            let d = (v[0] - v[1])
                .abs()
                .max((v[0] - v[2]).abs())
                .max((v[1] - v[2]).abs());
            s.record(d, || format!("{} x={x}", f.name()));
        }
        Ok(())
    })?;

    finish(common, &[law, stationarity, ergodicity, derivative, forms])
}

/// `E g(Z)` for a fallible integrand; the first failure is returned.
fn expect_fallible<G>(g: G, cfg: &QuadConfig) -> gumbel_stein::Result<f64>
where
    G: Fn(f64) -> gumbel_stein::Result<f64>,
{
    let failure = std::cell::Cell::new(None);
    let v = GumbelStd.expect(
        |x| match g(x) {
            Ok(v) => v,
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        },
        cfg,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => v,
    }
}

pub fn verify_stein(common: &Common, times: &[f64]) -> CliResult<bool> {
    check_times(times)?;
    let sg = Semigroup::new(common.quad()?);
    let dict = Dictionary::standard();
    let xs = x_grid();

    let residual = per_entry(&dict, "stein_identity", 1e-8, |f, s| {
        let r = sg.stein_residual(f)?;
        s.record(r, || f.name().to_string());
        Ok(())
    })?;

    // max |L0 P_t f| relative to 2 sup|f'| / (1 - e^{-t}); must stay below 1.
    let sup_bound = per_entry(&dict, "evolved_generator_bound", 1.0 + 1e-9, |f, s| {
        for &t in times.iter().filter(|t| **t > 0.0) {
            let bound = 2.0 * f.sup_fprime / -(-t).exp_m1();
            for &x in &xs {
                let r = sg.generator_of_evolved(f, t, x)?.abs() / bound;
                s.record(r, || format!("{} t={t} x={x}", f.name()));
            }
        }
        Ok(())
    })?;

    finish(common, &[residual, sup_bound])
}

type Fprime = (&'static str, fn(f64) -> f64);

const FPRIMES: [Fprime; 4] = [
    ("1", |_| 1.0),
    ("x", |x| x),
    ("exp(-x)", |x: f64| (-x).exp()),
    ("sin", f64::sin),
];

fn growth(name: &str, n: u64) -> gumbel_stein::Result<GrowthBound> {
    Ok(match name {
        "x" => GrowthBound::linear(0.0, 1.0),
        "exp(-x)" => GrowthBound::bounded((-identity_support_floor(n)?).exp()),
        _ => GrowthBound::bounded(1.0),
    })
}

pub fn verify_identity(
    common: &Common,
    n_min: u64,
    n_max: u64,
    mode: IdentityModeArg,
) -> CliResult<bool> {
    common.check_samples()?;
    if n_max < n_min {
        return Err(CliError::Config(format!(
            "--n-max {n_max} is below --n-min {n_min}"
        )));
    }
    let exec = Execution::default();
    let mut table = Table::new(&[
        "n",
        "fprime",
        "lhs",
        "lhs_se",
        "rhs",
        "rhs_se",
        "difference",
        "allowed",
        "pass",
    ]);
    let mut all = true;
    for n in n_min..=n_max {
        for (i, (name, fp)) in FPRIMES.iter().enumerate() {
            let m = match mode {
                IdentityModeArg::Enumerate => IdentityMode::Enumerate {
                    max_atoms: 1 << 22,
                    tol: 1e-12,
                },
                IdentityModeArg::MonteCarlo => IdentityMode::MonteCarlo {
                    samples: common.samples,
                    seed: common.seed.wrapping_add(1000 * n + i as u64),
                },
            };
            let s = main_identity_sides(n, fp, growth(name, n)?, m, exec)?;
            let allowed = match mode {
                IdentityModeArg::Enumerate => s.truncation_bound + 1e-8,
                IdentityModeArg::MonteCarlo => 4.0 * s.lhs.std_err.hypot(s.rhs.std_err),
            };
            let pass = s.difference() <= allowed;
            all &= pass;
            eprintln!(
                "{} n={n} f'={name}: lhs {:.10} rhs {:.10} |diff| {:.2e} allowed {:.2e}",
                if pass { "PASS" } else { "FAIL" },
                s.lhs.mean,
                s.rhs.mean,
                s.difference(),
                allowed
            );
            table.push(vec![
                n.into(),
                (*name).into(),
                s.lhs.mean.into(),
                s.lhs.std_err.into(),
                s.rhs.mean.into(),
                s.rhs.std_err.into(),
                s.difference().into(),
                allowed.into(),
                pass.into(),
            ]);
        }
    }
    table.emit(common.format, common.out.as_deref())?;
    Ok(all)
}

pub fn coupon_rate(
    common: &Common,
    grid: &NGrid,
    metric: MetricArg,
    mode: LawModeArg,
) -> CliResult<bool> {
    let ns = grid.values()?;
    let cfg = common.quad()?;
    let dict = Dictionary::standard();
    let law = law_mode(common, mode)?;
    // Parallel over n inside, so the per-n work stays sequential.
    let distances = Execution::default().map_slice(&ns, |&n| match metric {
        MetricArg::Kolmogorov => kolmogorov_distance(n, None),
        MetricArg::DictLip2 => dict_distance(n, &dict, law, &cfg, Execution::Sequential),
    });
    let distances = distances
        .into_iter()
        .collect::<gumbel_stein::Result<Vec<f64>>>()?;
    let metric = match metric {
        MetricArg::Kolmogorov => Metric::Kolmogorov,
        MetricArg::DictLip2 => Metric::DictLip2,
    };
    let report = rate_fit(metric, &ns, &distances)?;
    let columns: Vec<&'static str> = CSV_HEADER.split(',').collect();
    let mut table = Table::new(&columns);
    for (&n, &d) in ns.iter().zip(&distances) {
        let nf = n as f64;
        table.push(vec![
            n.into(),
            metric.to_string().into(),
            d.into(),
            (nf.ln() / nf).into(),
            report.fit_constant.into(),
            report.fit_exponent.into(),
        ]);
    }
    table.emit(common.format, common.out.as_deref())?;
    eprintln!(
        "metric {metric}: fit_exponent {:.6} fit_constant {:.6} band_ratio {:.4} max_residual {:.3e}",
        report.fit_exponent,
        report.fit_constant,
        report.band_ratio(),
        report.max_residual
    );
    Ok(true)
}

fn law_mode(common: &Common, mode: LawModeArg) -> CliResult<LawMode> {
    Ok(match mode {
        LawModeArg::Exact => LawMode::exact(),
        LawModeArg::MonteCarlo => {
            common.check_samples()?;
            LawMode::MonteCarlo {
                samples: common.samples,
                seed: common.seed,
            }
        }
    })
}

fn named_function(name: &str) -> CliResult<TestFunction> {
    let f = match name {
        "zero" => TestFunction::constant(0.0),
        "identity" => TestFunction::identity(),
        "sin" => TestFunction::sin(),
        "cos" => TestFunction::cos(),
        other => Dictionary::standard()
            .entries()
            .iter()
            .find(|f| f.name() == other)
            .cloned()
            .ok_or_else(|| CliError::Config(format!("unknown test function {other:?}")))?,
    };
    Ok(f)
}

pub struct GapArgs {
    pub h: String,
    pub n: Vec<u64>,
    pub calibration_n: u64,
    pub c_hat: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub mode: LawModeArg,
}

pub fn gap_profile(common: &Common, args: &GapArgs) -> CliResult<bool> {
    let h = named_function(&args.h)?;
    let cfg = common.quad()?;
    let law = law_mode(common, args.mode)?;
    let times = args.times.clone().unwrap_or_else(default_t_grid);
    check_times(&times)?;
    if args.n.is_empty() {
        return Err(CliError::Config("--n needs at least one size".into()));
    }
    let exec = Execution::default();
    let c_hat = match args.c_hat {
        Some(c) if c >= 0.0 && c.is_finite() => c,
        Some(c) => return Err(CliError::Config(format!("--c-hat must be >= 0, got {c}"))),
        None => {
            let cal = gap_decomposition(args.calibration_n, &h, &times, law, &cfg, exec)?;
            calibrate_envelope(args.calibration_n, &cal)
        }
    };
    eprintln!("h {}: C_hat {c_hat:.6}", h.name());

    let slack = 1.25;
    let k_se = 3.0;
    let mut table = Table::new(&[
        "n",
        "t",
        "gap",
        "gap_se",
        "A1",
        "A2",
        "A3",
        "defect",
        "envelope",
        "violation",
    ]);
    let mut pass = true;
    for &n in &args.n {
        let points = gap_decomposition(n, &h, &times, law, &cfg, exec)?;
        let bad = envelope_violations(n, c_hat, slack, k_se, &points);
        for (i, p) in points.iter().enumerate() {
            let violated = bad.contains(&i);
            if violated {
                eprintln!(
                    "FAIL n={n} t={}: |gap| {:.3e} above envelope {:.3e}",
                    p.t,
                    p.gap.mean.abs(),
                    envelope(n, c_hat, slack, p.t)
                );
            }
            table.push(vec![
                n.into(),
                p.t.into(),
                p.gap.mean.into(),
                p.gap.std_err.into(),
                p.a1.mean.into(),
                p.a2.mean.into(),
                p.a3.mean.into(),
                p.defect.mean.into(),
                envelope(n, c_hat, slack, p.t).into(),
                violated.into(),
            ]);
        }
        pass &= bad.is_empty();
    }
    table.emit(common.format, common.out.as_deref())?;
    Ok(pass)
}
