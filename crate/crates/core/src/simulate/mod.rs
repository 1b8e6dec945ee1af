//! Randomization Monte Carlo over a fixed finite population.
//!
//! A study re-draws the assignment vector many times (or walks through every
//! assignment), re-runs each configured estimator on the realized data, and
//! summarizes the randomization distribution of the estimates. Replication
//! `r` draws from an RNG stream keyed only by `(seed, r)`, replications are
//! collected in index order, and aggregation is sequential with compensated
//! summation, so the report does not depend on the thread count.

mod oracle;
mod population;
mod stats;

pub use oracle::{population_oracle, sample_mean_variance, PopulationOracle};
pub use population::{generate_population, PopulationKind};
pub use stats::{compensated_mean, ks_normal, sample_sd, shape, CompensatedSum, Shape};

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SyntheticPopulation;
use crate::design::{
    check_enumerable, enumerate_assignments, enumeration_cap, sample_assignment_with, stream_rng,
};
use crate::error::{Arm, Error, Result};
use crate::estimator::EstimatorConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Sampled,
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimator {
    pub name: String,
    #[serde(flatten)]
    pub config: EstimatorConfig,
}

impl NamedEstimator {
    pub fn new(name: impl Into<String>, config: EstimatorConfig) -> Self {
        NamedEstimator {
            name: name.into(),
            config,
        }
    }
}

/// Where a plan's population comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationSource {
    Generate {
        kind: PopulationKind,
        n: usize,
        #[serde(default)]
        effect: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        /// Relative paths resolve against the plan file's directory.
        path: PathBuf,
        y1: String,
        y0: String,
        covariates: Vec<String>,
        #[serde(default = "yes")]
        add_intercept: bool,
    },
    Inline {
        /// One inner array per unit.
        covariates: Vec<Vec<f64>>,
        y1: Vec<f64>,
        y0: Vec<f64>,
        #[serde(default = "yes")]
        add_intercept: bool,
    },
}

fn yes() -> bool {
    true
}

impl PopulationSource {
    pub fn load(&self, base_dir: Option<&Path>) -> Result<SyntheticPopulation> {
        match self {
            PopulationSource::Generate {
                kind,
                n,
                effect,
                seed,
            } => generate_population(*kind, *n, *effect, *seed),
            PopulationSource::Csv {
                path,
                y1,
                y0,
                covariates,
                add_intercept,
            } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                SyntheticPopulation::load_csv(full, y1, y0, covariates, *add_intercept)
            }
            PopulationSource::Inline {
                covariates,
                y1,
                y0,
                add_intercept,
            } => {
                let n = y1.len();
                let d = covariates.first().map_or(0, Vec::len);
                if covariates.len() != n {
                    return Err(Error::LengthMismatch {
                        what: "inline covariate rows vs y1",
                        expected: n,
                        actual: covariates.len(),
                    });
                }
                if let Some(bad) = covariates.iter().find(|r| r.len() != d) {
                    return Err(Error::LengthMismatch {
                        what: "inline covariate row width",
                        expected: d,
                        actual: bad.len(),
                    });
                }
                let width = d + usize::from(*add_intercept);
                let m = DMatrix::from_fn(n, width, |i, j| if j < d { covariates[i][j] } else { 1.0 });
                SyntheticPopulation::new(m, y1.clone(), y0.clone(), *add_intercept)
            }
        }
    }
}

/// The JSON form of a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub population: PopulationSource,
    pub n1: usize,
    #[serde(default)]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub mode: Mode,
    pub estimators: Vec<NamedEstimator>,
}

fn default_alpha() -> f64 {
    0.05
}

/// A validated study over a loaded population.
#[derive(Clone, Debug)]
pub struct SimulationPlan {
    pub population: SyntheticPopulation,
    pub n1: usize,
    /// Ignored in exhaustive mode, where every assignment is visited once.
    pub replications: usize,
    pub seed: u64,
    pub alpha: f64,
    pub mode: Mode,
    pub estimators: Vec<NamedEstimator>,
}

impl SimulationPlan {
    pub fn from_document(doc: &PlanDocument, base_dir: Option<&Path>) -> Result<Self> {
        let plan = SimulationPlan {
            population: doc.population.load(base_dir)?,
            n1: doc.n1,
            replications: doc.replications,
            seed: doc.seed,
            alpha: doc.alpha,
            mode: doc.mode,
            estimators: doc.estimators.clone(),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_json_str(s: &str, base_dir: Option<&Path>) -> Result<Self> {
        let doc: PlanDocument =
            serde_json::from_str(s).map_err(|e| Error::InvalidPlan(e.to_string()))?;
        Self::from_document(&doc, base_dir)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.population.n();
        if self.n1 == 0 || self.n1 >= n {
            return Err(Error::InvalidArmSize { n, n1: self.n1 });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha { alpha: self.alpha });
        }
        match self.mode {
            Mode::Sampled if self.replications == 0 => {
                return Err(Error::InvalidPlan(
                    "replications must be at least 1 in sampled mode".into(),
                ))
            }
            Mode::Exhaustive => {
                check_enumerable(n, self.n1, enumeration_cap())?;
            }
            Mode::Sampled => {}
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidPlan("no estimators configured".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.estimators {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::InvalidPlan(format!("duplicate estimator name `{}`", e.name)));
            }
            e.config.validate()?;
            if let Some((spec1, spec0)) = e.config.specs() {
                spec1
                    .family
                    .check_outcomes(self.population.y1())
                    .map_err(|err| err.in_arm(Arm::Treated))?;
                spec0
                    .family
                    .check_outcomes(self.population.y0())
                    .map_err(|err| err.in_arm(Arm::Control))?;
            }
        }
        Ok(())
    }

    /// Number of assignments the study visits.
    pub fn assignment_count(&self) -> Result<usize> {
        match self.mode {
            Mode::Sampled => Ok(self.replications),
            Mode::Exhaustive => {
                check_enumerable(self.population.n(), self.n1, enumeration_cap()).map(|c| c as usize)
            }
        }
    }
}

/// One estimator's result on one replication.
#[derive(Clone, Debug, PartialEq)]
pub enum Draw {
    Estimate { tau_hat: f64, lower: f64, upper: f64 },
    Failed { code: &'static str },
}

/// Per-replication draws; `draws[r][e]` is estimator `e` on replication `r`.
#[derive(Clone, Debug)]
pub struct Replicates {
    pub names: Vec<String>,
    pub draws: Vec<Vec<Draw>>,
}

impl Replicates {
    /// Writes one column of estimates per estimator, one row per
    /// replication; failed fits are empty cells.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.names)?;
        for row in &self.draws {
            out.write_record(row.iter().map(|d| match d {
                Draw::Estimate { tau_hat, .. } => format!("{tau_hat:?}"),
                Draw::Failed { .. } => String::new(),
            }))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Successful estimates of estimator `index`, in replication order.
    pub fn estimates(&self, index: usize) -> Vec<f64> {
        self.draws
            .iter()
            .filter_map(|row| match row[index] {
                Draw::Estimate { tau_hat, .. } => Some(tau_hat),
                Draw::Failed { .. } => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub name: String,
    pub config: EstimatorConfig,
    pub successes: usize,
    pub failures: usize,
    /// Failed replications by error code.
    pub failure_codes: BTreeMap<String, usize>,
    pub mean: Option<f64>,
    /// `mean - tau`.
    pub bias: Option<f64>,
    pub sd: Option<f64>,
    /// Fraction of successful replications whose interval contains tau.
    pub coverage: Option<f64>,
    pub mean_width: Option<f64>,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    pub ks_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationReport {
    pub mode: Mode,
    pub n: usize,
    pub n1: usize,
    pub replications: usize,
    pub seed: u64,
    pub alpha: f64,
    pub tau: f64,
    pub estimators: Vec<EstimatorSummary>,
}

impl SimulationReport {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.name == name)
    }
}

pub fn run(plan: &SimulationPlan) -> Result<SimulationReport> {
    run_with_replicates(plan).map(|(report, _)| report)
}

/// Runs the study, also returning every replicate draw.
pub fn run_with_replicates(plan: &SimulationPlan) -> Result<(SimulationReport, Replicates)> {
    plan.validate()?;
    let pop = &plan.population;
    let n = pop.n();
    let draws: Vec<Vec<Draw>> = match plan.mode {
        Mode::Sampled => (0..plan.replications)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream_rng(plan.seed, r as u64);
                let a = sample_assignment_with(n, plan.n1, &mut rng)?;
                replicate(plan, a.z())
            })
            .collect::<Result<_>>()?,
        Mode::Exhaustive => enumerate_assignments(n, plan.n1, enumeration_cap())?
            .par_iter()
            .map(|a| replicate(plan, a.z()))
            .collect::<Result<_>>()?,
    };

    let tau = pop.tau();
    let estimators = plan
        .estimators
        .iter()
        .enumerate()
        .map(|(e, named)| summarize(named, draws.iter().map(|row| &row[e]), tau))
        .collect();
    let report = SimulationReport {
        mode: plan.mode,
        n,
        n1: plan.n1,
        replications: draws.len(),
        seed: plan.seed,
        alpha: plan.alpha,
        tau,
        estimators,
    };
    let replicates = Replicates {
        names: plan.estimators.iter().map(|e| e.name.clone()).collect(),
        draws,
    };
    Ok((report, replicates))
}

fn replicate(plan: &SimulationPlan, z: &[bool]) -> Result<Vec<Draw>> {
    let ds = plan.population.realize(z)?;
    Ok(plan
        .estimators
        .iter()
        .map(|e| match e.config.estimate(&ds, plan.alpha) {
            Ok(est) => Draw::Estimate {
                tau_hat: est.tau_hat,
                lower: est.interval.lower,
                upper: est.interval.upper,
            },
            Err(err) => Draw::Failed { code: err.code() },
        })
        .collect())
}

fn summarize<'a>(
    named: &NamedEstimator,
    draws: impl Iterator<Item = &'a Draw>,
    tau: f64,
) -> EstimatorSummary {
    let mut estimates = Vec::new();
    let mut covered = 0usize;
    let mut width = CompensatedSum::new();
    let mut failure_codes = BTreeMap::new();
    let mut failures = 0;
    for d in draws {
        match d {
            Draw::Estimate {
                tau_hat,
                lower,
                upper,
            } => {
                estimates.push(*tau_hat);
                if *lower <= tau && tau <= *upper {
                    covered += 1;
                }
                width.add(upper - lower);
            }
            Draw::Failed { code } => {
                failures += 1;
                *failure_codes.entry(code.to_string()).or_insert(0) += 1;
            }
        }
    }
    let successes = estimates.len();
    let any = successes > 0;
    let mean = any.then(|| compensated_mean(&estimates));
    let shape = shape(&estimates);
    EstimatorSummary {
        name: named.name.clone(),
        config: named.config.clone(),
        successes,
        failures,
        failure_codes,
        mean,
        bias: mean.map(|m| m - tau),
        sd: sample_sd(&estimates),
        coverage: any.then(|| covered as f64 / successes as f64),
        mean_width: any.then(|| width.value() / successes as f64),
        skewness: shape.map(|s| s.skewness),
        excess_kurtosis: shape.map(|s| s.excess_kurtosis),
        ks_distance: shape.map(|s| s.ks_distance),
    }
}

/// Result of running one estimator over every assignment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExhaustiveBias {
    pub assignments: usize,
    pub successes: usize,
    pub failures: usize,
    pub failure_codes: BTreeMap<String, usize>,
    pub tau: f64,
    /// Mean estimate over the successful assignments.
    pub mean: Option<f64>,
    pub bias: Option<f64>,
}

/// Exact mean of the estimator over all `C(n, n1)` assignments, minus tau.
pub fn exhaustive_bias(
    pop: &SyntheticPopulation,
    config: &EstimatorConfig,
    n1: usize,
) -> Result<ExhaustiveBias> {
    let plan = SimulationPlan {
        population: pop.clone(),
        n1,
        replications: 0,
        seed: 0,
        alpha: 0.05,
        mode: Mode::Exhaustive,
        estimators: vec![NamedEstimator::new("estimator", config.clone())],
    };
    let report = run(&plan)?;
    let s = &report.estimators[0];
    Ok(ExhaustiveBias {
        assignments: report.replications,
        successes: s.successes,
        failures: s.failures,
        failure_codes: s.failure_codes.clone(),
        tau: report.tau,
        mean: s.mean,
        bias: s.bias,
    })
}
