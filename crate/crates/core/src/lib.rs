//! Covariate-adjusted estimation of the average treatment effect in
//! completely randomized experiments.
//!
//! Each arm's missing potential outcomes are imputed with a regression fitted
//! on the other arm ([`estimator::oaxaca_blinder`]); any model family that is
//! prediction unbiased on its training data gives a consistent estimate with
//! a conservative interval. The [`simulate`] module re-randomizes a known
//! finite population to check bias, coverage and interval width.

pub mod cli;
pub mod dataset;
pub mod design;
pub mod error;
pub mod estimator;
mod linalg;
pub mod models;
pub mod simulate;

pub use dataset::{Dataset, SyntheticPopulation};
pub use error::{Arm, Error, Result};
pub use estimator::{AdjustedEstimate, EstimatorConfig, QuantileKind};
pub use models::{Family, FittedModel, ModelSpec};
