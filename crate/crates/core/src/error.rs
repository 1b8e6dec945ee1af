use std::fmt;

use serde::Serialize;

/// Treatment arm label. Serialized as the integer `0` or `1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn from_indicator(z: bool) -> Self {
        if z {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn indicator(self) -> bool {
        matches!(self, Arm::Treated)
    }

    pub fn as_u8(self) -> u8 {
        self.indicator() as u8
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl Serialize for Arm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

/// Whether an error comes from bad input or from a statistical fit that
/// could not be completed on valid input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Fitting,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("column `{column}` not found in header")]
    MissingColumn { column: String },

    #[error("treatment column `{column}` row {row}: value `{value}` is not 0 or 1")]
    NonBinaryTreatment {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },

    #[error("arm {arm} has no units")]
    DegenerateArm { arm: Arm },

    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid arm size: n1 = {n1} must satisfy 1 <= n1 <= n - 1 with n = {n}")]
    InvalidArmSize { n: usize, n1: usize },

    #[error("enumeration of C({n}, {n1}) = {count} assignments exceeds the cap of {cap}")]
    EnumerationTooLarge {
        n: usize,
        n1: usize,
        count: f64,
        cap: u64,
    },

    #[error("outcome domain violated for {family}: {detail}")]
    OutcomeDomain { family: &'static str, detail: String },

    #[error("covariate domain violated: {detail}")]
    CovariateDomain { detail: String },

    #[error("design matrix is rank deficient: column {column} is linearly dependent on the others")]
    RankDeficient { column: usize },

    #[error("logistic regression: outcomes are separated by a hyperplane, the MLE does not exist")]
    Separation,

    #[error("solver did not converge in {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("Hessian smallest eigenvalue {eigenvalue:e} is below the floor {floor:e}")]
    IllConditionedHessian { eigenvalue: f64, floor: f64 },

    #[error("second-stage calibration is degenerate: base predictions are constant")]
    DegenerateCalibration,

    #[error("dimension mismatch: expected {expected} covariate columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("model was trained on arm {trained} but imputation requested arm {requested}")]
    ArmMismatch { trained: Arm, requested: Arm },

    #[error("model for arm {arm} is not prediction unbiased")]
    NotPredictionUnbiased { arm: Arm },

    #[error("arm {arm} has {count} units, at least {required} required")]
    TooFewUnits {
        arm: Arm,
        count: usize,
        required: usize,
    },

    #[error("alpha must lie in (0, 1), got {alpha}")]
    InvalidAlpha { alpha: f64 },

    #[error("leverage of row {row} is 1; the HC weight is undefined")]
    UnitLeverage { row: usize },

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid simulation plan: {0}")]
    InvalidPlan(String),

    #[error("arm {arm}: {source}")]
    InArm {
        arm: Arm,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn in_arm(self, arm: Arm) -> Self {
        match self {
            e @ Error::InArm { .. } => e,
            e => Error::InArm {
                arm,
                source: Box::new(e),
            },
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingColumn { .. } => "MISSING_COLUMN",
            Error::NonBinaryTreatment { .. } => "NON_BINARY_TREATMENT",
            Error::NonNumericCell { .. } => "NON_NUMERIC_CELL",
            Error::NonFinite { .. } => "NON_FINITE",
            Error::DegenerateArm { .. } => "DEGENERATE_ARM",
            Error::LengthMismatch { .. } => "LENGTH_MISMATCH",
            Error::InvalidArmSize { .. } => "INVALID_ARM_SIZE",
            Error::EnumerationTooLarge { .. } => "ENUMERATION_TOO_LARGE",
            Error::OutcomeDomain { .. } => "OUTCOME_DOMAIN_ERROR",
            Error::CovariateDomain { .. } => "COVARIATE_DOMAIN_ERROR",
            Error::RankDeficient { .. } => "RANK_DEFICIENT",
            Error::Separation => "SEPARATION",
            Error::NonConvergence { .. } => "NON_CONVERGENCE",
            Error::IllConditionedHessian { .. } => "ILL_CONDITIONED_HESSIAN",
            Error::DegenerateCalibration => "DEGENERATE_CALIBRATION",
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::ArmMismatch { .. } => "ARM_MISMATCH",
            Error::NotPredictionUnbiased { .. } => "NOT_PREDICTION_UNBIASED",
            Error::TooFewUnits { .. } => "TOO_FEW_UNITS",
            Error::InvalidAlpha { .. } => "INVALID_ALPHA",
            Error::UnitLeverage { .. } => "UNIT_LEVERAGE",
            Error::InvalidSpec(_) => "INVALID_SPEC",
            Error::InvalidPlan(_) => "INVALID_PLAN",
            Error::InArm { source, .. } => source.code(),
            Error::Io(_) => "IO_ERROR",
            Error::Csv(_) => "CSV_ERROR",
            Error::Json(_) => "JSON_ERROR",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::RankDeficient { .. }
            | Error::Separation
            | Error::NonConvergence { .. }
            | Error::IllConditionedHessian { .. }
            | Error::DegenerateCalibration
            | Error::UnitLeverage { .. }
            | Error::NotPredictionUnbiased { .. } => ErrorClass::Fitting,
            Error::InArm { source, .. } => source.class(),
            _ => ErrorClass::Validation,
        }
    }

    /// Arm the error is attributed to, if any.
    pub fn arm(&self) -> Option<Arm> {
        match self {
            Error::InArm { arm, .. }
            | Error::DegenerateArm { arm }
            | Error::NotPredictionUnbiased { arm }
            | Error::TooFewUnits { arm, .. } => Some(*arm),
            _ => None,
        }
    }

    /// The innermost error, with arm attribution stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::InArm { source, .. } => source.root(),
            e => e,
        }
    }
}
