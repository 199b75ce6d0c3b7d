use serde::Serialize;

use super::{materialize, ExperimentConfig};
use crate::datagen::{gen_dataset, ScenarioKind};
use crate::error::Result;
use crate::oracle::{bayes_probs_closed_form, bayes_probs_mc, epsilon_sup, Link, ProbitScale};
use crate::rng::{derive_seed, stream, TAG_ORACLE, TAG_TEST};

/// Agreement between the closed-form oracles and Monte Carlo on one
/// generated test set.
#[derive(Clone, Debug, Serialize)]
pub struct OracleCheckReport {
    pub scenario: String,
    pub rows: usize,
    pub mc_k: usize,
    pub epsilon_sup: f64,
    /// Probit outcome: closed form is exact, so gaps should be MC noise.
    pub probit_max_abs_diff: f64,
    pub probit_rows_beyond_3se: usize,
    /// Logistic outcome: rescaled closed form within `2 eps + 3 se`.
    pub logistic_max_abs_diff: f64,
    pub logistic_violations: usize,
    /// False for scenarios without a closed form (non-linear features).
    pub applicable: bool,
}

impl OracleCheckReport {
    pub fn passed(&self) -> bool {
        !self.applicable || self.logistic_violations == 0
    }
}

/// Compare closed-form and Monte Carlo Bayes probabilities on up to
/// `max_rows` test rows drawn as in the first grid cell.
pub fn oracle_check(config: &ExperimentConfig, max_rows: usize) -> Result<OracleCheckReport> {
    config.validate()?;
    let (scenario, mixture) = materialize(&config.scenario)?;
    let rows = config.test_size.min(max_rows).max(1);
    let seed = derive_seed(config.base_seed, &[u64::MAX]);
    let test = gen_dataset(&scenario, &mixture, rows, &mut stream(seed, &[TAG_TEST]))?;
    let eps = epsilon_sup().value;
    let mut report = OracleCheckReport {
        scenario: scenario.kind.name().into(),
        rows,
        mc_k: config.oracle_mc_k,
        epsilon_sup: eps,
        probit_max_abs_diff: 0.0,
        probit_rows_beyond_3se: 0,
        logistic_max_abs_diff: 0.0,
        logistic_violations: 0,
        applicable: scenario.kind != ScenarioKind::Nonlinear,
    };
    if !report.applicable {
        return Ok(report);
    }
    let beta = scenario.beta_star()?;
    let oracle_seed = derive_seed(seed, &[TAG_ORACLE]);
    for (link, scale) in [(Link::Probit, ProbitScale::Probit), (Link::Logistic, ProbitScale::LogisticPi8)] {
        let mc = bayes_probs_mc(&test.z_observed, &test.mask, &mixture, 0.0, beta, config.oracle_mc_k, link, None, oracle_seed)?;
        let cf = bayes_probs_closed_form(&test.z_observed, &test.mask, &mixture, 0.0, beta, scale)?;
        for (c, m) in cf.iter().zip(&mc) {
            let gap = (c - m.mean).abs();
            match link {
                Link::Probit => {
                    report.probit_max_abs_diff = report.probit_max_abs_diff.max(gap);
                    report.probit_rows_beyond_3se += (gap > 3.0 * m.se) as usize;
                }
                Link::Logistic => {
                    report.logistic_max_abs_diff = report.logistic_max_abs_diff.max(gap);
                    report.logistic_violations += (gap > 2.0 * eps + 3.0 * m.se) as usize;
                }
            }
        }
    }
    Ok(report)
}
