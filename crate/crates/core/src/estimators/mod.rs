//! Prediction procedures for incomplete covariates.
//!
//! Every procedure ends with one or more logistic fits; they differ in how
//! missing cells are handled before (imputation), during (SAEM) or instead
//! of (pattern-by-pattern, complete case) that fit.

mod mice;
mod saem;
mod spec;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Mask};
use crate::error::{Error, Result};
use crate::gaussian::Pattern;
use crate::logistic::{fit_logistic, LogisticModel, LogisticOptions};

pub use mice::MiceState;
pub use saem::{SaemOptions, SaemState};
pub use spec::{MethodFamily, MethodSpec, PbpFallback};

/// Intercept and slopes of a fitted (or pooled) logistic model. `mask`
/// holds the mask-indicator coefficients when the design was augmented.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefReport {
    pub intercept: f64,
    pub features: Vec<f64>,
    pub mask: Vec<f64>,
}

impl CoefReport {
    fn from_model(model: &LogisticModel, d: usize) -> Self {
        CoefReport {
            intercept: model.intercept,
            features: model.coefs[..d].to_vec(),
            mask: model.coefs[d..].to_vec(),
        }
    }
}

/// Free-form fit diagnostics. `converged = false` marks results that were
/// returned despite hitting an iteration budget.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub notes: Vec<String>,
}

impl Diagnostics {
    fn ok() -> Self {
        Diagnostics {
            converged: true,
            notes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum PredictorState {
    CompleteCase(LogisticModel),
    Imputed {
        constants: Vec<f64>,
        model: LogisticModel,
    },
    PatternByPattern {
        models: BTreeMap<Pattern, LogisticModel>,
        fallback: Option<Box<FittedPredictor>>,
    },
    Mice(Box<MiceState>),
    Saem(Box<SaemState>),
}

#[derive(Clone, Debug)]
pub struct FittedPredictor {
    pub spec: MethodSpec,
    pub coef_report: Option<CoefReport>,
    pub diagnostics: Diagnostics,
    pub state: PredictorState,
    d: usize,
}

impl FittedPredictor {
    pub fn n_features(&self) -> usize {
        self.d
    }

    /// Per-row probabilities for an incomplete test matrix.
    pub fn predict(&self, z_test: &DMatrix<f64>, mask_test: &Mask) -> Result<Vec<f64>> {
        if z_test.ncols() != self.d || mask_test.ncols() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: z_test.ncols(),
            });
        }
        if mask_test.nrows() != z_test.nrows() {
            return Err(Error::DimensionMismatch {
                expected: z_test.nrows(),
                got: mask_test.nrows(),
            });
        }
        match &self.state {
            PredictorState::CompleteCase(model) => {
                if mask_test.any_missing() {
                    return Err(Error::UnsupportedPrediction(
                        "complete-case models cannot score rows with missing values".into(),
                    ));
                }
                Ok(rows(z_test).map(|r| model.prob(&r)).collect())
            }
            PredictorState::Imputed { constants, model } => {
                let design = imputed_design(z_test, mask_test, constants, self.spec.use_mask_feature);
                Ok(rows(&design).map(|r| model.prob(&r)).collect())
            }
            PredictorState::PatternByPattern { models, fallback } => {
                let fallback_probs = match fallback {
                    Some(f) => Some(f.predict(z_test, mask_test)?),
                    None => None,
                };
                (0..z_test.nrows())
                    .map(|i| {
                        let p = mask_test.pattern(i);
                        match models.get(&p) {
                            Some(m) => {
                                let x: Vec<f64> = p.obs().iter().map(|&j| z_test[(i, j)]).collect();
                                Ok(m.prob(&x))
                            }
                            None => fallback_probs
                                .as_ref()
                                .map(|f| f[i])
                                .ok_or_else(|| Error::UnroutablePattern(p.to_string())),
                        }
                    })
                    .collect()
            }
            PredictorState::Mice(state) => state.predict(z_test, mask_test),
            PredictorState::Saem(state) => state.predict(z_test, mask_test),
        }
    }
}

fn rows(m: &DMatrix<f64>) -> impl Iterator<Item = Vec<f64>> + '_ {
    (0..m.nrows()).map(move |i| m.row(i).iter().copied().collect())
}

/// Fill missing cells with per-column constants, optionally appending the
/// `d` mask columns.
pub fn imputed_design(z: &DMatrix<f64>, mask: &Mask, constants: &[f64], with_mask: bool) -> DMatrix<f64> {
    let (n, d) = z.shape();
    let width = if with_mask { 2 * d } else { d };
    DMatrix::from_fn(n, width, |i, j| {
        if j < d {
            if mask.get(i, j) {
                constants[j]
            } else {
                z[(i, j)]
            }
        } else {
            mask.get(i, j - d) as u8 as f64
        }
    })
}

/// Append mask indicator columns to a completed matrix.
pub fn with_mask_columns(x: &DMatrix<f64>, mask: &Mask) -> DMatrix<f64> {
    let (n, d) = x.shape();
    DMatrix::from_fn(n, 2 * d, |i, j| {
        if j < d {
            x[(i, j)]
        } else {
            mask.get(i, j - d) as u8 as f64
        }
    })
}

/// Per-column means over observed cells.
pub fn observed_means(z: &DMatrix<f64>, mask: &Mask) -> Result<Vec<f64>> {
    (0..z.ncols())
        .map(|j| {
            let (sum, count) = (0..z.nrows())
                .filter(|&i| !mask.get(i, j))
                .fold((0.0, 0usize), |(s, c), i| (s + z[(i, j)], c + 1));
            if count == 0 {
                Err(Error::Imputation(format!("column {} has no observed values", j + 1)))
            } else {
                Ok(sum / count as f64)
            }
        })
        .collect()
}

fn logistic_opts() -> LogisticOptions {
    LogisticOptions::default()
}

fn check_dataset(data: &Dataset) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::DegenerateFit("empty training set".into()));
    }
    Ok(())
}

/// Logistic regression on the fully observed rows only.
pub fn fit_complete_case(data: &Dataset) -> Result<FittedPredictor> {
    check_dataset(data)?;
    let d = data.d();
    let complete: Vec<usize> = (0..data.n())
        .filter(|&i| !data.mask.row(i).iter().any(|&b| b))
        .collect();
    if complete.len() < d + 2 {
        return Err(Error::DegenerateFit(format!(
            "{} complete rows, need at least {}",
            complete.len(),
            d + 2
        )));
    }
    let design = DMatrix::from_fn(complete.len(), d, |i, j| data.z_observed[(complete[i], j)]);
    let y: Vec<f64> = complete.iter().map(|&i| data.y[i] as f64).collect();
    let model = fit_logistic(&design, &y, &logistic_opts())?;
    Ok(FittedPredictor {
        spec: MethodSpec::complete_case(),
        coef_report: Some(CoefReport::from_model(&model, d)),
        diagnostics: Diagnostics::ok(),
        state: PredictorState::CompleteCase(model),
        d,
    })
}

/// Impute every missing cell with `c` (or with training column means when
/// `c` is `None`), then fit one logistic model.
pub fn fit_constant_impute(data: &Dataset, c: Option<f64>, use_mask_feature: bool) -> Result<FittedPredictor> {
    check_dataset(data)?;
    let d = data.d();
    let constants = match c {
        Some(v) => vec![v; d],
        None => observed_means(&data.z_observed, &data.mask)?,
    };
    let design = imputed_design(&data.z_observed, &data.mask, &constants, use_mask_feature);
    let model = fit_logistic(&design, &data.y_f64(), &logistic_opts())?;
    let spec = match c {
        Some(v) => MethodSpec::constant(v, use_mask_feature),
        None => MethodSpec::mean(use_mask_feature),
    };
    Ok(FittedPredictor {
        spec,
        coef_report: Some(CoefReport::from_model(&model, d)),
        diagnostics: Diagnostics::ok(),
        state: PredictorState::Imputed { constants, model },
        d,
    })
}

/// One logistic model per training pattern with at least `|obs| + 2` rows;
/// other patterns go to `fallback`.
pub fn fit_pbp(data: &Dataset, fallback: PbpFallback) -> Result<FittedPredictor> {
    check_dataset(data)?;
    let d = data.d();
    let mut models = BTreeMap::new();
    let mut diagnostics = Diagnostics::ok();
    for (pattern, idx) in data.mask.group_by_pattern() {
        let obs = pattern.obs();
        if obs.is_empty() || idx.len() < obs.len() + 2 {
            diagnostics
                .notes
                .push(format!("pattern {pattern}: {} rows, routed to fallback", idx.len()));
            continue;
        }
        let design = DMatrix::from_fn(idx.len(), obs.len(), |i, j| data.z_observed[(idx[i], obs[j])]);
        let y: Vec<f64> = idx.iter().map(|&i| data.y[i] as f64).collect();
        match fit_logistic(&design, &y, &logistic_opts()) {
            Ok(m) => {
                if m.separation_flag {
                    diagnostics.notes.push(format!("pattern {pattern}: separated"));
                }
                models.insert(pattern, m);
            }
            Err(Error::DegenerateFit(why)) => {
                diagnostics
                    .notes
                    .push(format!("pattern {pattern}: {why}, routed to fallback"));
            }
            Err(e) => return Err(e),
        }
    }
    let fallback_model = match fallback {
        PbpFallback::MeanImputeGlobal => Some(Box::new(fit_constant_impute(data, None, false)?)),
        PbpFallback::Error => None,
    };
    let mut spec = MethodSpec::pbp();
    spec.pbp_fallback = fallback;
    Ok(FittedPredictor {
        spec,
        coef_report: None,
        diagnostics,
        state: PredictorState::PatternByPattern {
            models,
            fallback: fallback_model,
        },
        d,
    })
}

pub fn fit_mice(data: &Dataset, spec: &MethodSpec, seed: u64) -> Result<FittedPredictor> {
    check_dataset(data)?;
    let (state, coef_report, diagnostics) = mice::fit(data, spec, seed)?;
    Ok(FittedPredictor {
        spec: spec.clone(),
        coef_report: Some(coef_report),
        diagnostics,
        state: PredictorState::Mice(Box::new(state)),
        d: data.d(),
    })
}

pub fn fit_saem(data: &Dataset, spec: &MethodSpec, seed: u64) -> Result<FittedPredictor> {
    check_dataset(data)?;
    let (state, diagnostics) = saem::fit(data, spec, seed)?;
    let coef_report = CoefReport {
        intercept: state.beta[0],
        features: state.beta[1..].to_vec(),
        mask: Vec::new(),
    };
    Ok(FittedPredictor {
        spec: spec.clone(),
        coef_report: Some(coef_report),
        diagnostics,
        state: PredictorState::Saem(Box::new(state)),
        d: data.d(),
    })
}

/// Fit any method. `seed` drives the stochastic families (MICE, SAEM).
pub fn fit(spec: &MethodSpec, data: &Dataset, seed: u64) -> Result<FittedPredictor> {
    spec.validate()?;
    let mut fitted = match spec.family {
        MethodFamily::Cc => fit_complete_case(data)?,
        MethodFamily::ConstImp => fit_constant_impute(data, Some(spec.impute_value()), spec.use_mask_feature)?,
        MethodFamily::MeanImp => fit_constant_impute(data, None, spec.use_mask_feature)?,
        MethodFamily::Pbp => fit_pbp(data, spec.pbp_fallback)?,
        MethodFamily::Mice => fit_mice(data, spec, seed)?,
        MethodFamily::Saem => fit_saem(data, spec, seed)?,
    };
    fitted.spec = spec.clone();
    Ok(fitted)
}
