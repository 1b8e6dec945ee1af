//! Command-line front end.
//!
//! Exit status is 0 on success, 2 when the input is invalid and 3 when a
//! statistical fit fails on valid input. Errors are written to stderr as
//! `{"error": {"code": ..., "message": ..., "arm": ...}}`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{load_csv, SyntheticPopulation};
use crate::design::{check_enumerable, enumeration_cap};
use crate::error::{Error, ErrorClass};
use crate::estimator::{EstimatorConfig, HcVariant, QuantileKind};
use crate::models::{Family, ModelSpec};
use crate::simulate::{self, exhaustive_bias, generate_population, PopulationKind, SimulationPlan};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_FITTING: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "rand-adjust", version, about = "Covariate-adjusted treatment effect estimation for completely randomized experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the average treatment effect from an experiment CSV.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study described by a JSON plan.
    Simulate(SimulateArgs),
    /// Average an estimator over every assignment of a small population.
    Enumerate(EnumerateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorKind {
    /// Per-arm regressions with imputation of the missing outcomes.
    OaxacaBlinder,
    DifferenceInMeans,
    /// Fully interacted OLS with sandwich standard errors.
    Lin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Constant,
    Ols,
    Logistic,
    Poisson,
    LogOlsDebiased,
    LogOlsCalibrated,
    Isotonic,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Constant => Family::Constant,
            FamilyArg::Ols => Family::Ols,
            FamilyArg::Logistic => Family::Logistic,
            FamilyArg::Poisson => Family::Poisson,
            FamilyArg::LogOlsDebiased => Family::LogOlsDebiased,
            FamilyArg::LogOlsCalibrated => Family::LogOlsCalibrated,
            FamilyArg::Isotonic => Family::Isotonic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum QuantileArg {
    Normal,
    T,
}

impl From<QuantileArg> for QuantileKind {
    fn from(q: QuantileArg) -> Self {
        match q {
            QuantileArg::Normal => QuantileKind::Normal,
            QuantileArg::T => QuantileKind::TWelch,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HcArg {
    Hc0,
    Hc2,
    Hc3,
}

impl From<HcArg> for HcVariant {
    fn from(h: HcArg) -> Self {
        match h {
            HcArg::Hc0 => HcVariant::Hc0,
            HcArg::Hc2 => HcVariant::Hc2,
            HcArg::Hc3 => HcVariant::Hc3,
        }
    }
}

/// Estimator choice shared by `estimate` and `enumerate`.
#[derive(Debug, Args)]
pub struct EstimatorArgs {
    #[arg(long, value_enum, default_value = "oaxaca-blinder")]
    pub estimator: EstimatorKind,
    /// Model family for the treated arm.
    #[arg(long, value_enum, default_value = "ols")]
    pub family1: FamilyArg,
    /// Model family for the control arm.
    #[arg(long, value_enum, default_value = "ols")]
    pub family0: FamilyArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "t")]
    pub quantile: QuantileArg,
    #[arg(long, value_enum, default_value = "hc3")]
    pub hc: HcArg,
    /// Take logs of the non-intercept covariates before fitting.
    #[arg(long)]
    pub log_covariates: bool,
}

impl EstimatorArgs {
    pub fn config(&self) -> EstimatorConfig {
        let quantile = self.quantile.into();
        match self.estimator {
            EstimatorKind::OaxacaBlinder => EstimatorConfig::OaxacaBlinder {
                spec1: ModelSpec::new(self.family1.into()).with_log_covariates(self.log_covariates),
                spec0: ModelSpec::new(self.family0.into()).with_log_covariates(self.log_covariates),
                quantile,
            },
            EstimatorKind::DifferenceInMeans => EstimatorConfig::DifferenceInMeans { quantile },
            EstimatorKind::Lin => EstimatorConfig::LinInteractions { hc: self.hc.into() },
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub outcome: String,
    #[arg(long)]
    pub treatment: String,
    /// Comma-separated covariate column names.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Do not append an intercept column.
    #[arg(long)]
    pub no_intercept: bool,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the plan's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the plan's replication count.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Write every replicate estimate as CSV, one column per estimator.
    #[arg(long)]
    pub dump_replicates: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    /// CSV population with both potential outcomes.
    #[arg(long, conflicts_with = "generate")]
    pub population: Option<PathBuf>,
    #[arg(long, default_value = "y1")]
    pub y1: String,
    #[arg(long, default_value = "y0")]
    pub y0: String,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long)]
    pub no_intercept: bool,
    /// Generate a synthetic population of this kind instead of reading one.
    #[arg(long, value_parser = parse_kind)]
    pub generate: Option<PopulationKind>,
    /// Effect size for a generated population.
    #[arg(long, default_value_t = 0.0)]
    pub effect: f64,
    /// Seed for a generated population.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Population size; for a CSV population, the first `n` units are used.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n1: usize,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_kind(s: &str) -> Result<PopulationKind, String> {
    s.replace('-', "_").parse().map_err(|e: Error| e.to_string())
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: String,
    arm: Option<crate::error::Arm>,
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: ErrorBody<'a>,
}

/// Writes the JSON error document and returns the matching exit status.
pub fn report_error(err: &Error, stderr: &mut dyn Write) -> i32 {
    let doc = ErrorJson {
        error: ErrorBody {
            code: err.code(),
            message: err.to_string(),
            arm: err.arm(),
        },
    };
    let _ = writeln!(stderr, "{}", serde_json::to_string(&doc).expect("error JSON"));
    match err.class() {
        ErrorClass::Validation => EXIT_VALIDATION,
        ErrorClass::Fitting => EXIT_FITTING,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            let doc = ErrorJson {
                error: ErrorBody {
                    code: "USAGE",
                    message: e.to_string().trim().to_string(),
                    arm: None,
                },
            };
            let _ = writeln!(stderr, "{}", serde_json::to_string(&doc).expect("error JSON"));
            return EXIT_VALIDATION;
        }
    };
    match execute(&cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => report_error(&e, stderr),
    }
}

pub fn execute(command: &Command, stdout: &mut dyn Write) -> crate::error::Result<()> {
    match command {
        Command::Estimate(a) => estimate(a, stdout),
        Command::Simulate(a) => simulate(a, stdout),
        Command::Enumerate(a) => enumerate(a, stdout),
    }
}

fn emit<T: Serialize>(value: &T, out: &OutputArgs, stdout: &mut dyn Write) -> crate::error::Result<()> {
    let text = if out.pretty {
        serde_json::to_string_pretty(value)?
    } else {
        serde_json::to_string(value)?
    };
    match &out.output {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            writeln!(f, "{text}")?;
            f.flush()?;
        }
        None => writeln!(stdout, "{text}")?,
    }
    Ok(())
}

fn estimate(a: &EstimateArgs, stdout: &mut dyn Write) -> crate::error::Result<()> {
    let ds = load_csv(&a.input, &a.outcome, &a.treatment, &a.covariates, !a.no_intercept)?;
    let est = a.estimator.config().estimate(&ds, a.estimator.alpha)?;
    emit(&est, &a.output, stdout)
}

fn simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> crate::error::Result<()> {
    let mut plan = SimulationPlan::from_json_file(&a.plan)?;
    if let Some(seed) = a.seed {
        plan.seed = seed;
    }
    if let Some(r) = a.replications {
        plan.replications = r;
    }
    plan.validate()?;
    let (report, replicates) = with_threads(a.threads, || simulate::run_with_replicates(&plan))?;
    if let Some(path) = &a.dump_replicates {
        replicates.write_csv(BufWriter::new(File::create(path)?))?;
    }
    emit(&report, &a.output, stdout)
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> crate::error::Result<T> + Send,
) -> crate::error::Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::InvalidPlan("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidPlan(format!("cannot start thread pool: {e}")))?
            .install(f),
    }
}

fn enumerate(a: &EnumerateArgs, stdout: &mut dyn Write) -> crate::error::Result<()> {
    let pop = load_population(a.population.as_deref(), a)?;
    // refuse before any fitting
    check_enumerable(pop.n(), a.n1, enumeration_cap())?;
    let result = exhaustive_bias(&pop, &a.estimator.config(), a.n1)?;
    emit(&result, &a.output, stdout)
}

fn load_population(path: Option<&Path>, a: &EnumerateArgs) -> crate::error::Result<SyntheticPopulation> {
    match (path, a.generate) {
        (Some(path), None) => {
            let pop = SyntheticPopulation::load_csv(path, &a.y1, &a.y0, &a.covariates, !a.no_intercept)?;
            match a.n {
                Some(n) if n < pop.n() => pop.select_units(&(0..n).collect::<Vec<_>>()),
                Some(n) if n > pop.n() => Err(Error::LengthMismatch {
                    what: "requested units vs population size",
                    expected: pop.n(),
                    actual: n,
                }),
                _ => Ok(pop),
            }
        }
        (None, Some(kind)) => {
            let n = a
                .n
                .ok_or_else(|| Error::InvalidPlan("--generate needs --n".into()))?;
            // fail on the size before spending time generating
            check_enumerable(n, a.n1, enumeration_cap())?;
            generate_population(kind, n, a.effect, a.seed)
        }
        _ => Err(Error::InvalidPlan(
            "give exactly one of --population or --generate".into(),
        )),
    }
}
