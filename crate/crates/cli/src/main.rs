//! `gumbel-stein`: verification suites and rate experiments.
//!
//! Exit codes: 0 pass, 1 assertion failure, 2 configuration or domain error,
//! 3 numerical non-convergence.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use gumbel_stein::QuadConfig;

use report::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gumbel_stein::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("configuration: {0}")]
    Config(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(gumbel_stein::Error::NonConvergence { .. }) => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "gumbel-stein",
    version,
    about = "Stein's method for the Gumbel law: verification suites and coupon-collector rates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Master seed for every Monte Carlo stream.
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    /// Absolute quadrature tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub abs_tol: f64,
    /// Relative quadrature tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub rel_tol: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

impl Common {
    pub fn quad(&self) -> CliResult<QuadConfig> {
        Ok(QuadConfig::new(self.abs_tol, self.rel_tol, 2048)?)
    }

    pub fn check_samples(&self) -> CliResult<()> {
        if self.samples == 0 {
            return Err(CliError::Config("--samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Spacing {
    Linear,
    Log2,
}

#[derive(Debug, Clone, Args)]
pub struct NGrid {
    #[arg(long, default_value_t = 16)]
    pub n_min: u64,
    #[arg(long, default_value_t = 4096)]
    pub n_max: u64,
    #[arg(long, value_enum, default_value_t = Spacing::Log2)]
    pub spacing: Spacing,
}

impl NGrid {
    pub fn values(&self) -> CliResult<Vec<u64>> {
        if self.n_max < self.n_min {
            return Err(CliError::Config(format!(
                "--n-max {} is below --n-min {}",
                self.n_max, self.n_min
            )));
        }
        Ok(match self.spacing {
            Spacing::Linear => (self.n_min..=self.n_max).collect(),
            Spacing::Log2 => (0..64)
                .map(|k| 1u64 << k)
                .filter(|n| (self.n_min..=self.n_max).contains(n))
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IdentityModeArg {
    Enumerate,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LawModeArg {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Kolmogorov,
    DictLip2,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Semigroup law, stationarity, ergodicity, derivative and generator-form suites.
    VerifySemigroup {
        #[command(flatten)]
        common: Common,
        /// Times used by the suites.
        #[arg(long = "t", value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0, 2.0])]
        times: Vec<f64>,
        /// Scales γ_t by 1 + eps; a negative control that must fail.
        #[arg(long, hide = true)]
        perturb_gamma: Option<f64>,
    },
    /// Stein identity residuals and the sup bound on the evolved generator.
    VerifyStein {
        #[command(flatten)]
        common: Common,
        #[arg(long = "t", value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0, 2.0])]
        times: Vec<f64>,
    },
    /// Both sides of the change-of-measure identity for n in the grid.
    VerifyIdentity {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        n_min: u64,
        #[arg(long, default_value_t = 3)]
        n_max: u64,
        #[arg(long, value_enum, default_value_t = IdentityModeArg::Enumerate)]
        mode: IdentityModeArg,
    },
    /// Distances between law(Z_n) and the Gumbel law, with a C ln n / n fit.
    CouponRate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: NGrid,
        #[arg(long, value_enum, default_value_t = MetricArg::Kolmogorov)]
        metric: MetricArg,
        /// How dict_lip2 integrates the law of Z_n.
        #[arg(long, value_enum, default_value_t = LawModeArg::Exact)]
        mode: LawModeArg,
    },
    /// Generator-gap profile t -> E[L0 P_t h(Z_n)] with its decomposition and envelope.
    GapProfile {
        #[command(flatten)]
        common: Common,
        /// Test function: zero, identity, sin, cos or a dictionary entry name.
        #[arg(long, default_value = "identity")]
        h: String,
        /// Validation sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [64u64, 256])]
        n: Vec<u64>,
        #[arg(long, default_value_t = 16)]
        calibration_n: u64,
        /// Fixes the envelope constant instead of calibrating it.
        #[arg(long)]
        c_hat: Option<f64>,
        #[arg(long = "t", value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value_t = LawModeArg::Exact)]
        mode: LawModeArg,
    },
}

fn run(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::VerifySemigroup {
            common,
            times,
            perturb_gamma,
        } => commands::verify_semigroup(&common, &times, perturb_gamma),
        Command::VerifyStein { common, times } => commands::verify_stein(&common, &times),
        Command::VerifyIdentity {
            common,
            n_min,
            n_max,
            mode,
        } => commands::verify_identity(&common, n_min, n_max, mode),
        Command::CouponRate {
            common,
            grid,
            metric,
            mode,
        } => commands::coupon_rate(&common, &grid, metric, mode),
        Command::GapProfile {
            common,
            h,
            n,
            calibration_n,
            c_hat,
            times,
            mode,
        } => commands::gap_profile(
            &common,
            &commands::GapArgs {
                h,
                n,
                calibration_n,
                c_hat,
                times,
                mode,
            },
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
