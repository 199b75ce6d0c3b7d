//! Prediction with logistic and Probit models when covariates are missing.
//!
//! Data come from Gaussian pattern mixtures; Bayes probabilities are
//! available in closed form (Probit link), through a rescaled Probit
//! approximation (logistic link), or by Monte Carlo. Estimators are scored
//! against those oracles.

pub mod datagen;
pub mod error;
pub mod estimators;
pub mod gaussian;
pub mod harness;
pub mod io;
pub mod logistic;
pub mod metrics;
pub mod oracle;
pub mod rng;

pub use datagen::{Dataset, Mask, PatternMixture, ScenarioConfig, ScenarioKind};
pub use error::{Error, Result};
pub use estimators::{FittedPredictor, MethodFamily, MethodSpec};
pub use gaussian::{GaussianParams, Pattern};
pub use harness::{ExperimentConfig, ResultRow};
pub use logistic::{LogisticModel, LogisticOptions};
pub use metrics::EvalReport;
pub use oracle::{Link, PatternProbit};
