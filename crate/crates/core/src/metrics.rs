//! Evaluation lenses: classification, probability estimation, calibration
//! and inference.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datagen::Mask;
use crate::error::{Error, Result};
use crate::gaussian::Pattern;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

fn classify(p: f64) -> u8 {
    (p >= 0.5) as u8
}

/// Error rate of `p >= 0.5` minus that of the Bayes classifier.
pub fn excess_misclassification(pred_probs: &[f64], bayes_probs: &[f64], y: &[u8]) -> Result<f64> {
    check_len(pred_probs.len(), bayes_probs.len())?;
    check_len(pred_probs.len(), y.len())?;
    if y.is_empty() {
        return Err(Error::InvalidInput("no rows to evaluate".into()));
    }
    let diff: i64 = pred_probs
        .iter()
        .zip(bayes_probs)
        .zip(y)
        .map(|((&p, &b), &t)| (classify(p) != t) as i64 - (classify(b) != t) as i64)
        .sum();
    Ok(diff as f64 / y.len() as f64)
}

pub fn mae_bayes(pred_probs: &[f64], bayes_probs: &[f64]) -> Result<f64> {
    check_len(pred_probs.len(), bayes_probs.len())?;
    if pred_probs.is_empty() {
        return Err(Error::InvalidInput("no rows to evaluate".into()));
    }
    Ok(pred_probs
        .iter()
        .zip(bayes_probs)
        .map(|(p, b)| (p - b).abs())
        .sum::<f64>()
        / pred_probs.len() as f64)
}

pub fn brier(probs: &[f64], y: &[u8]) -> Result<f64> {
    check_len(probs.len(), y.len())?;
    if y.is_empty() {
        return Err(Error::InvalidInput("no rows to evaluate".into()));
    }
    Ok(probs
        .iter()
        .zip(y)
        .map(|(&p, &t)| (p - t as f64).powi(2))
        .sum::<f64>()
        / y.len() as f64)
}

/// Isotonic least-squares regression of `y` on `probs` by pool-adjacent-
/// violators. Tied forecasts start in a shared block.
pub fn pav_recalibrate(probs: &[f64], y: &[u8]) -> Result<Vec<f64>> {
    check_len(probs.len(), y.len())?;
    if probs.is_empty() {
        return Err(Error::InvalidInput("PAV needs at least one point".into()));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));

    // (sum of y, count, index of first sorted position)
    let mut blocks: Vec<(f64, usize, usize)> = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let start = k;
        let mut sum = 0.0;
        while k < order.len() && probs[order[k]] == probs[order[start]] {
            sum += y[order[k]] as f64;
            k += 1;
        }
        blocks.push((sum, k - start, start));
        while blocks.len() >= 2 {
            let (s1, c1, _) = blocks[blocks.len() - 2];
            let (s2, c2, _) = blocks[blocks.len() - 1];
            if s1 / c1 as f64 <= s2 / c2 as f64 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            last.0 = s1 + s2;
            last.1 = c1 + c2;
        }
    }
    let mut out = vec![0.0; probs.len()];
    for &(sum, count, start) in &blocks {
        let v = sum / count as f64;
        for &i in &order[start..start + count] {
            out[i] = v;
        }
    }
    debug_assert!(
        order.windows(2).all(|w| out[w[0]] <= out[w[1]]),
        "PAV output must be non-decreasing in the forecast"
    );
    Ok(out)
}

/// Miscalibration: Brier score minus the Brier score after PAV recalibration.
pub fn mcb(probs: &[f64], y: &[u8]) -> Result<f64> {
    let recal = pav_recalibrate(probs, y)?;
    Ok(brier(probs, y)? - brier(&recal, y)?)
}

pub fn mcb_delta(probs: &[f64], bayes_probs: &[f64], y: &[u8]) -> Result<f64> {
    check_len(probs.len(), bayes_probs.len())?;
    Ok(mcb(probs, y)? - mcb(bayes_probs, y)?)
}

/// Mean squared error of the feature coefficients (intercept and mask
/// coefficients excluded). `None` when the method reports no coefficients.
pub fn coef_mse(feature_coefs: Option<&[f64]>, beta_star: &[f64]) -> Result<Option<f64>> {
    let Some(coefs) = feature_coefs else {
        return Ok(None);
    };
    check_len(beta_star.len(), coefs.len())?;
    Ok(Some(
        coefs
            .iter()
            .zip(beta_star)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / beta_star.len() as f64,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternMetrics {
    pub n: usize,
    pub mae_bayes: f64,
    pub excess_misclassification: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub excess_misclassification: f64,
    pub mae_bayes: f64,
    pub mcb_delta: f64,
    pub coef_mse: Option<f64>,
    pub per_pattern: BTreeMap<Pattern, PatternMetrics>,
    pub runtime_fit_seconds: f64,
    pub runtime_predict_seconds: f64,
}

impl EvalReport {
    /// Score predictions against the Bayes probabilities and labels of a test set.
    pub fn evaluate(
        pred_probs: &[f64],
        bayes_probs: &[f64],
        y: &[u8],
        mask: &Mask,
        coef_mse: Option<f64>,
    ) -> Result<Self> {
        check_len(pred_probs.len(), mask.nrows())?;
        let mut per_pattern = BTreeMap::new();
        for (pattern, rows) in mask.group_by_pattern() {
            let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let (p, b) = (pick(pred_probs), pick(bayes_probs));
            let yy: Vec<u8> = rows.iter().map(|&i| y[i]).collect();
            per_pattern.insert(
                pattern,
                PatternMetrics {
                    n: rows.len(),
                    mae_bayes: mae_bayes(&p, &b)?,
                    excess_misclassification: excess_misclassification(&p, &b, &yy)?,
                },
            );
        }
        Ok(EvalReport {
            excess_misclassification: excess_misclassification(pred_probs, bayes_probs, y)?,
            mae_bayes: mae_bayes(pred_probs, bayes_probs)?,
            mcb_delta: mcb_delta(pred_probs, bayes_probs, y)?,
            coef_mse,
            per_pattern,
            runtime_fit_seconds: 0.0,
            runtime_predict_seconds: 0.0,
        })
    }

    /// Frequency-weighted recombination of the per-pattern values
    /// `(mae_bayes, excess_misclassification)`.
    pub fn aggregate_per_pattern(&self) -> (f64, f64) {
        let n: usize = self.per_pattern.values().map(|m| m.n).sum();
        let w = |m: &PatternMetrics| m.n as f64 / n as f64;
        (
            self.per_pattern.values().map(|m| w(m) * m.mae_bayes).sum(),
            self.per_pattern
                .values()
                .map(|m| w(m) * m.excess_misclassification)
                .sum(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_predictions_have_zero_excess() {
        let b = [0.2, 0.7, 0.5, 0.9];
        assert_eq!(excess_misclassification(&b, &b, &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(mae_bayes(&b, &b).unwrap(), 0.0);
    }

    #[test]
    fn flipped_predictions_on_ten_rows() {
        // Bayes classifies rows 0..4 as 1 and 5..9 as 0; labels disagree on
        // rows 4 and 9, so Bayes errs 2/10. Flipping every forecast errs
        // on the other 8 rows: excess = 0.8 - 0.2.
        let bayes = [0.9, 0.8, 0.7, 0.6, 0.6, 0.1, 0.2, 0.3, 0.4, 0.4];
        let y = [1, 1, 1, 1, 0, 0, 0, 0, 0, 1];
        let pred: Vec<f64> = bayes.iter().map(|b| 1.0 - b).collect();
        assert_abs_diff_eq!(excess_misclassification(&pred, &bayes, &y).unwrap(), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn threshold_ties_classify_as_one() {
        assert_eq!(excess_misclassification(&[0.5], &[0.4], &[1]).unwrap(), -1.0);
    }

    #[test]
    fn mae_constant_shift() {
        let b = [0.2, 0.4, 0.6, 0.8];
        let p: Vec<f64> = b.iter().map(|v| v + 0.1).collect();
        assert_abs_diff_eq!(mae_bayes(&p, &b).unwrap(), 0.1, epsilon = 1e-15);
        assert!(mae_bayes(&p, &b[..3]).is_err());
    }

    #[test]
    fn pav_six_point_instance() {
        let probs = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let y = [0, 1, 0, 0, 1, 1];
        let r = pav_recalibrate(&probs, &y).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(r[0], 0.0);
        for v in &r[1..4] {
            assert_abs_diff_eq!(*v, third, epsilon = 1e-15);
        }
        assert_eq!(&r[4..], &[1.0, 1.0]);
    }

    #[test]
    fn pav_fixed_points() {
        let probs = [0.0, 0.0, 0.5, 0.5, 1.0];
        let y = [0, 0, 1, 0, 1];
        let r = pav_recalibrate(&probs, &y).unwrap();
        assert_eq!(r, vec![0.0, 0.0, 0.5, 0.5, 1.0]);
        assert_eq!(mcb(&r, &y).unwrap(), 0.0);
        assert_eq!(pav_recalibrate(&[0.3, 0.9, 0.1], &[1, 1, 1]).unwrap(), vec![1.0; 3]);
        assert!(pav_recalibrate(&[], &[]).is_err());
    }

    #[test]
    fn pav_pools_ties() {
        // Tied forecasts must share one output even when labels differ.
        let r = pav_recalibrate(&[0.4, 0.4, 0.4], &[1, 0, 0]).unwrap();
        assert!(r.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn coef_mse_cases() {
        let b = [1.0, -0.5, 0.3];
        assert_eq!(coef_mse(Some(&b), &b).unwrap(), Some(0.0));
        let shifted: Vec<f64> = b.iter().map(|v| v + 0.1).collect();
        assert_abs_diff_eq!(coef_mse(Some(&shifted), &b).unwrap().unwrap(), 0.01, epsilon = 1e-15);
        assert_eq!(coef_mse(None, &b).unwrap(), None);
        assert!(coef_mse(Some(&b[..2]), &b).is_err());
    }

    #[test]
    fn report_aggregates_per_pattern() {
        let mask = Mask::from_rows(&[
            vec![false, true],
            vec![false, false],
            vec![true, false],
            vec![false, true],
            vec![false, false],
        ])
        .unwrap();
        let pred = [0.3, 0.8, 0.55, 0.1, 0.45];
        let bayes = [0.4, 0.7, 0.45, 0.2, 0.6];
        let y = [0, 1, 1, 0, 1];
        let rep = EvalReport::evaluate(&pred, &bayes, &y, &mask, None).unwrap();
        let (mae, exc) = rep.aggregate_per_pattern();
        assert_abs_diff_eq!(mae, rep.mae_bayes, epsilon = 1e-12);
        assert_abs_diff_eq!(exc, rep.excess_misclassification, epsilon = 1e-12);
        assert_eq!(rep.per_pattern.len(), 3);
    }
}
