//! Observed experiments, synthetic finite populations, and CSV ingestion.
//!
//! A [`Dataset`] is what an analyst sees after the experiment: covariates,
//! one observed outcome per unit and the binary treatment vector. A
//! [`SyntheticPopulation`] carries both potential outcomes and is used to
//! realize datasets under arbitrary assignments.
//!
//! Unit `i` is the `i`-th data row of the source (0-based, header excluded).
//! When an intercept is requested it is appended as the last covariate column.

use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Arm, Error, Result};

pub const INTERCEPT_NAME: &str = "(intercept)";

#[derive(Clone, Debug)]
pub struct Dataset {
    covariates: Arc<DMatrix<f64>>,
    covariate_names: Arc<Vec<String>>,
    outcomes: Vec<f64>,
    treatment: Vec<bool>,
    has_intercept: bool,
    n1: usize,
}

impl Dataset {
    /// Validates and builds a dataset. Column names default to `x0, x1, ...`.
    pub fn new(
        covariates: DMatrix<f64>,
        outcomes: Vec<f64>,
        treatment: Vec<bool>,
        has_intercept: bool,
    ) -> Result<Self> {
        let names = default_names(covariates.ncols(), has_intercept);
        Self::from_shared(
            Arc::new(covariates),
            Arc::new(names),
            outcomes,
            treatment,
            has_intercept,
        )
    }

    pub(crate) fn from_shared(
        covariates: Arc<DMatrix<f64>>,
        covariate_names: Arc<Vec<String>>,
        outcomes: Vec<f64>,
        treatment: Vec<bool>,
        has_intercept: bool,
    ) -> Result<Self> {
        let n = outcomes.len();
        if covariates.nrows() != n {
            return Err(Error::LengthMismatch {
                what: "covariate rows vs outcomes",
                expected: n,
                actual: covariates.nrows(),
            });
        }
        if treatment.len() != n {
            return Err(Error::LengthMismatch {
                what: "treatment vs outcomes",
                expected: n,
                actual: treatment.len(),
            });
        }
        if covariate_names.len() != covariates.ncols() {
            return Err(Error::LengthMismatch {
                what: "covariate names vs columns",
                expected: covariates.ncols(),
                actual: covariate_names.len(),
            });
        }
        check_finite_vec(&outcomes, "outcomes")?;
        check_finite_matrix(&covariates)?;
        let n1 = check_arms(&treatment)?;
        Ok(Dataset {
            covariates,
            covariate_names,
            outcomes,
            treatment,
            has_intercept,
            n1,
        })
    }

    /// Replaces the covariate column names.
    pub fn with_covariate_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.covariates.ncols() {
            return Err(Error::LengthMismatch {
                what: "covariate names vs columns",
                expected: self.covariates.ncols(),
                actual: names.len(),
            });
        }
        self.covariate_names = Arc::new(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.n() - self.n1
    }

    pub fn arm_size(&self, arm: Arm) -> usize {
        match arm {
            Arm::Treated => self.n1,
            Arm::Control => self.n0(),
        }
    }

    /// Covariate dimension, intercept column included.
    pub fn d(&self) -> usize {
        self.covariates.ncols()
    }

    /// Proportion treated, `n1 / n`.
    pub fn treated_fraction(&self) -> f64 {
        self.n1 as f64 / self.n() as f64
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    /// Rows belonging to arm `t`.
    pub fn arm(&self, t: Arm) -> Result<ArmView<'_>> {
        let indices: Vec<usize> = self
            .treatment
            .iter()
            .enumerate()
            .filter(|(_, &z)| z == t.indicator())
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            return Err(Error::DegenerateArm { arm: t });
        }
        Ok(ArmView {
            dataset: self,
            arm: t,
            indices,
        })
    }

    /// Same data with every outcome shifted by `c`.
    pub fn shift_outcomes(&self, c: f64) -> Result<Self> {
        let outcomes = self.outcomes.iter().map(|y| y + c).collect();
        Self::from_shared(
            self.covariates.clone(),
            self.covariate_names.clone(),
            outcomes,
            self.treatment.clone(),
            self.has_intercept,
        )
    }

    /// Reorders units so that new unit `k` is old unit `order[k]`.
    pub fn permute_units(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n() {
            return Err(Error::LengthMismatch {
                what: "unit permutation",
                expected: self.n(),
                actual: order.len(),
            });
        }
        let covariates = self.covariates.select_rows(order.iter());
        let outcomes = order.iter().map(|&i| self.outcomes[i]).collect();
        let treatment = order.iter().map(|&i| self.treatment[i]).collect();
        Self::from_shared(
            Arc::new(covariates),
            self.covariate_names.clone(),
            outcomes,
            treatment,
            self.has_intercept,
        )
    }
}

/// The rows of one treatment arm.
#[derive(Clone, Debug)]
pub struct ArmView<'a> {
    dataset: &'a Dataset,
    arm: Arm,
    indices: Vec<usize>,
}

impl<'a> ArmView<'a> {
    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn arm(&self) -> Arm {
        self.arm
    }

    /// Row indices in increasing order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.indices
            .iter()
            .map(|&i| self.dataset.outcomes[i])
            .collect()
    }

    pub fn covariates(&self) -> DMatrix<f64> {
        self.dataset.covariates.select_rows(self.indices.iter())
    }
}

/// A finite population with both potential outcomes known.
#[derive(Clone, Debug)]
pub struct SyntheticPopulation {
    covariates: Arc<DMatrix<f64>>,
    covariate_names: Arc<Vec<String>>,
    y1: Vec<f64>,
    y0: Vec<f64>,
    has_intercept: bool,
}

impl SyntheticPopulation {
    pub fn new(
        covariates: DMatrix<f64>,
        y1: Vec<f64>,
        y0: Vec<f64>,
        has_intercept: bool,
    ) -> Result<Self> {
        let names = default_names(covariates.ncols(), has_intercept);
        Self::with_names(covariates, names, y1, y0, has_intercept)
    }

    pub fn with_names(
        covariates: DMatrix<f64>,
        covariate_names: Vec<String>,
        y1: Vec<f64>,
        y0: Vec<f64>,
        has_intercept: bool,
    ) -> Result<Self> {
        let n = y1.len();
        if y0.len() != n {
            return Err(Error::LengthMismatch {
                what: "y0 vs y1",
                expected: n,
                actual: y0.len(),
            });
        }
        if covariates.nrows() != n {
            return Err(Error::LengthMismatch {
                what: "covariate rows vs potential outcomes",
                expected: n,
                actual: covariates.nrows(),
            });
        }
        if covariate_names.len() != covariates.ncols() {
            return Err(Error::LengthMismatch {
                what: "covariate names vs columns",
                expected: covariates.ncols(),
                actual: covariate_names.len(),
            });
        }
        check_finite_vec(&y1, "y1")?;
        check_finite_vec(&y0, "y0")?;
        check_finite_matrix(&covariates)?;
        let pop = SyntheticPopulation {
            covariates: Arc::new(covariates),
            covariate_names: Arc::new(covariate_names),
            y1,
            y0,
            has_intercept,
        };
        if !pop.tau().is_finite() {
            return Err(Error::NonFinite {
                what: "treatment effect",
                row: 0,
            });
        }
        Ok(pop)
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn y1(&self) -> &[f64] {
        &self.y1
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn potential_outcomes(&self, arm: Arm) -> &[f64] {
        match arm {
            Arm::Treated => &self.y1,
            Arm::Control => &self.y0,
        }
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    /// Sample average treatment effect, `mean(y1) - mean(y0)`.
    pub fn tau(&self) -> f64 {
        let n = self.n() as f64;
        let diff: f64 = self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).sum();
        diff / n
    }

    /// Observed dataset under assignment `z`.
    pub fn realize(&self, z: &[bool]) -> Result<Dataset> {
        if z.len() != self.n() {
            return Err(Error::LengthMismatch {
                what: "assignment vs population",
                expected: self.n(),
                actual: z.len(),
            });
        }
        let outcomes = z
            .iter()
            .zip(self.y1.iter().zip(&self.y0))
            .map(|(&zi, (&a, &b))| if zi { a } else { b })
            .collect();
        Dataset::from_shared(
            self.covariates.clone(),
            self.covariate_names.clone(),
            outcomes,
            z.to_vec(),
            self.has_intercept,
        )
    }

    /// Jointly permutes units; new unit `k` is old unit `order[k]`.
    pub fn permute_units(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n() {
            return Err(Error::LengthMismatch {
                what: "unit permutation",
                expected: self.n(),
                actual: order.len(),
            });
        }
        Self::with_names(
            self.covariates.select_rows(order.iter()),
            self.covariate_names.to_vec(),
            order.iter().map(|&i| self.y1[i]).collect(),
            order.iter().map(|&i| self.y0[i]).collect(),
            self.has_intercept,
        )
    }

    /// Population made of the listed units, in the listed order.
    pub fn select_units(&self, units: &[usize]) -> Result<Self> {
        if let Some(&bad) = units.iter().find(|&&i| i >= self.n()) {
            return Err(Error::LengthMismatch {
                what: "unit index vs population size",
                expected: self.n(),
                actual: bad,
            });
        }
        Self::with_names(
            self.covariates.select_rows(units.iter()),
            self.covariate_names.to_vec(),
            units.iter().map(|&i| self.y1[i]).collect(),
            units.iter().map(|&i| self.y0[i]).collect(),
            self.has_intercept,
        )
    }

    /// Loads a population from a CSV carrying both potential outcomes.
    pub fn load_csv(
        path: impl AsRef<Path>,
        y1_col: &str,
        y0_col: &str,
        covariate_cols: &[String],
        add_intercept: bool,
    ) -> Result<Self> {
        let table = Table::read(std::fs::File::open(path)?)?;
        let y1 = table.numeric_column(y1_col)?;
        let y0 = table.numeric_column(y0_col)?;
        let (covariates, names) = table.design(covariate_cols, add_intercept)?;
        Self::with_names(covariates, names, y1, y0, add_intercept)
    }
}

/// Loads an observed experiment from a comma-delimited CSV file with a header row.
pub fn load_csv(
    path: impl AsRef<Path>,
    outcome_col: &str,
    treatment_col: &str,
    covariate_cols: &[String],
    add_intercept: bool,
) -> Result<Dataset> {
    read_csv(
        std::fs::File::open(path)?,
        outcome_col,
        treatment_col,
        covariate_cols,
        add_intercept,
    )
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: Read>(
    reader: R,
    outcome_col: &str,
    treatment_col: &str,
    covariate_cols: &[String],
    add_intercept: bool,
) -> Result<Dataset> {
    let table = Table::read(reader)?;
    let outcomes = table.numeric_column(outcome_col)?;
    let treatment = table.binary_column(treatment_col)?;
    let (covariates, names) = table.design(covariate_cols, add_intercept)?;
    Dataset::from_shared(
        Arc::new(covariates),
        Arc::new(names),
        outcomes,
        treatment,
        add_intercept,
    )
}

struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.iter().map(str::to_owned).collect();
        let rows = rdr.records().collect::<Result<Vec<_>, _>>()?;
        Ok(Table { header, rows })
    }

    fn position(&self, column: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| Error::MissingColumn {
                column: column.to_owned(),
            })
    }

    fn numeric_column(&self, column: &str) -> Result<Vec<f64>> {
        let j = self.position(column)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(row, rec)| {
                let cell = rec.get(j).unwrap_or("");
                let value: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                    row,
                    column: column.to_owned(),
                    value: cell.to_owned(),
                })?;
                if value.is_finite() {
                    Ok(value)
                } else {
                    Err(Error::NonNumericCell {
                        row,
                        column: column.to_owned(),
                        value: cell.to_owned(),
                    })
                }
            })
            .collect()
    }

    fn binary_column(&self, column: &str) -> Result<Vec<bool>> {
        let j = self.position(column)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(row, rec)| {
                let cell = rec.get(j).unwrap_or("");
                match cell.parse::<f64>() {
                    Ok(v) if v == 0.0 => Ok(false),
                    Ok(v) if v == 1.0 => Ok(true),
                    _ => Err(Error::NonBinaryTreatment {
                        row,
                        column: column.to_owned(),
                        value: cell.to_owned(),
                    }),
                }
            })
            .collect()
    }

    fn design(
        &self,
        covariate_cols: &[String],
        add_intercept: bool,
    ) -> Result<(DMatrix<f64>, Vec<String>)> {
        let n = self.rows.len();
        let d = covariate_cols.len() + add_intercept as usize;
        let mut x = DMatrix::zeros(n, d);
        for (j, name) in covariate_cols.iter().enumerate() {
            let col = self.numeric_column(name)?;
            x.set_column(j, &nalgebra::DVector::from_vec(col));
        }
        let mut names = covariate_cols.to_vec();
        if add_intercept {
            x.column_mut(d - 1).fill(1.0);
            names.push(INTERCEPT_NAME.to_owned());
        }
        Ok((x, names))
    }
}

fn default_names(d: usize, has_intercept: bool) -> Vec<String> {
    (0..d)
        .map(|j| {
            if has_intercept && j + 1 == d {
                INTERCEPT_NAME.to_owned()
            } else {
                format!("x{j}")
            }
        })
        .collect()
}

fn check_finite_vec(v: &[f64], what: &'static str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(row) => Err(Error::NonFinite { what, row }),
        None => Ok(()),
    }
}

fn check_finite_matrix(x: &DMatrix<f64>) -> Result<()> {
    for (k, v) in x.iter().enumerate() {
        if !v.is_finite() {
            // column-major storage
            return Err(Error::NonFinite {
                what: "covariates",
                row: k % x.nrows(),
            });
        }
    }
    Ok(())
}

fn check_arms(treatment: &[bool]) -> Result<usize> {
    let n1 = treatment.iter().filter(|&&z| z).count();
    if n1 == 0 {
        return Err(Error::DegenerateArm { arm: Arm::Treated });
    }
    if n1 == treatment.len() {
        return Err(Error::DegenerateArm { arm: Arm::Control });
    }
    Ok(n1)
}
