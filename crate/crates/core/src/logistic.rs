//! Ridge-stabilised logistic regression by iteratively reweighted least
//! squares.
//!
//! The intercept is always fitted and never penalised. Rows are accumulated
//! in a canonical (lexicographic) order so the fit is bit-identical under any
//! permutation of the input rows.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{cholesky_jitter, sigmoid};

/// Coefficient norm beyond which IRLS stops and reports separation.
pub const SEPARATION_NORM: f64 = 1e3;
pub const PROB_CLIP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub ridge: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            max_iter: 100,
            tol: 1e-8,
            ridge: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefs: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separation_flag: bool,
}

impl LogisticModel {
    pub fn zero(p: usize) -> Self {
        LogisticModel {
            intercept: 0.0,
            coefs: vec![0.0; p],
            converged: true,
            iterations: 0,
            separation_flag: false,
        }
    }

    pub fn n_features(&self) -> usize {
        self.coefs.len()
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefs.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    /// Clipped probability for one row.
    pub fn prob(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(row)).clamp(PROB_CLIP, 1.0 - PROB_CLIP)
    }

    /// Intercept followed by the slopes.
    pub fn params(&self) -> Vec<f64> {
        std::iter::once(self.intercept).chain(self.coefs.iter().copied()).collect()
    }
}

pub fn predict_proba(model: &LogisticModel, design: &DMatrix<f64>) -> Result<Vec<f64>> {
    if design.ncols() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            got: design.ncols(),
        });
    }
    let mut row = vec![0.0; design.ncols()];
    Ok((0..design.nrows())
        .map(|i| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = design[(i, j)];
            }
            model.prob(&row)
        })
        .collect())
}

/// Fit on binary labels.
pub fn fit_logistic(design: &DMatrix<f64>, y: &[f64], opts: &LogisticOptions) -> Result<LogisticModel> {
    if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput(format!("label {v} is not binary")));
    }
    fit_logistic_weighted(design, y, None, opts)
}

/// Fit with fractional targets in `[0, 1]` and optional non-negative row
/// weights (the expected log-likelihood of a Bernoulli with mean `target`).
pub fn fit_logistic_weighted(
    design: &DMatrix<f64>,
    targets: &[f64],
    weights: Option<&[f64]>,
    opts: &LogisticOptions,
) -> Result<LogisticModel> {
    let problem = Problem::new(design, targets, weights)?;
    problem.solve(opts)
}

/// Row-major copy of a weighted logistic problem with an intercept column.
pub(crate) struct Problem {
    /// `n x (p + 1)`, first column all ones.
    rows: Vec<f64>,
    targets: Vec<f64>,
    weights: Vec<f64>,
    width: usize,
    total_weight: f64,
}

impl Problem {
    fn new(design: &DMatrix<f64>, targets: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        let (n, p) = design.shape();
        if n == 0 {
            return Err(Error::DegenerateFit("no rows to fit".into()));
        }
        if targets.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: targets.len(),
            });
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design matrix has non-finite entries".into()));
        }
        if targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidInput("targets must lie in [0, 1]".into()));
        }
        let ones = vec![1.0; n];
        let weights = weights.unwrap_or(&ones);
        if weights.len() != n || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
        let total_weight: f64 = weights.iter().sum();
        if !(total_weight > 0.0) {
            return Err(Error::DegenerateFit("all row weights are zero".into()));
        }
        let weighted_mean = targets.iter().zip(weights).map(|(t, w)| t * w).sum::<f64>() / total_weight;
        if weighted_mean <= 0.0 || weighted_mean >= 1.0 {
            return Err(Error::DegenerateFit(format!(
                "constant labels (all {}): no finite maximum-likelihood estimate",
                if weighted_mean <= 0.0 { 0 } else { 1 }
            )));
        }
        let width = p + 1;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            for j in 0..p {
                match design[(a, j)].total_cmp(&design[(b, j)]) {
                    Ordering::Equal => {}
                    o => return o,
                }
            }
            targets[a]
                .total_cmp(&targets[b])
                .then(weights[a].total_cmp(&weights[b]))
        });
        let mut rows = Vec::with_capacity(n * width);
        for &i in &order {
            rows.push(1.0);
            rows.extend((0..p).map(|j| design[(i, j)]));
        }
        Ok(Problem {
            rows,
            targets: order.iter().map(|&i| targets[i]).collect(),
            weights: order.iter().map(|&i| weights[i]).collect(),
            width,
            total_weight,
        })
    }

    fn n(&self) -> usize {
        self.targets.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.width..(i + 1) * self.width]
    }

    fn penalized_loglik(&self, beta: &[f64], ridge: f64) -> f64 {
        let mut ll = 0.0;
        for i in 0..self.n() {
            let eta: f64 = self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum();
            // log sigma(eta) = -softplus(-eta)
            let t = self.targets[i];
            ll += self.weights[i] * (t * -softplus(-eta) + (1.0 - t) * -softplus(eta));
        }
        ll - 0.5 * ridge * beta[1..].iter().map(|b| b * b).sum::<f64>()
    }

    /// Penalised score and Hessian (negative of the log-likelihood's) at `beta`.
    fn score_and_information(&self, beta: &[f64], ridge: f64) -> (DVector<f64>, DMatrix<f64>) {
        let w = self.width;
        let mut score = DVector::zeros(w);
        let mut info = DMatrix::zeros(w, w);
        for i in 0..self.n() {
            let x = self.row(i);
            let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta);
            let r = self.weights[i] * (self.targets[i] - mu);
            let v = self.weights[i] * mu * (1.0 - mu);
            for a in 0..w {
                score[a] += x[a] * r;
                let va = v * x[a];
                for b in 0..=a {
                    info[(a, b)] += va * x[b];
                }
            }
        }
        for a in 0..w {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        for a in 1..w {
            score[a] -= ridge * beta[a];
            info[(a, a)] += ridge;
        }
        (score, info)
    }

    fn newton_direction(&self, beta: &[f64], ridge: f64) -> Option<(DVector<f64>, f64)> {
        let (score, info) = self.score_and_information(beta, ridge);
        let max_score = score.amax() / self.total_weight;
        let chol = cholesky_jitter(&info)?;
        Some((chol.solve(&score), max_score))
    }

    fn separates(&self, beta: &[f64]) -> bool {
        (0..self.n()).all(|i| {
            let eta: f64 = self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum();
            let t = self.targets[i];
            self.weights[i] == 0.0 || (t == 1.0 && eta > 0.0) || (t == 0.0 && eta < 0.0)
        })
    }

    fn solve(&self, opts: &LogisticOptions) -> Result<LogisticModel> {
        let w = self.width;
        let mut beta = vec![0.0; w];
        let mean = self
            .targets
            .iter()
            .zip(&self.weights)
            .map(|(t, wt)| t * wt)
            .sum::<f64>()
            / self.total_weight;
        beta[0] = (mean / (1.0 - mean)).ln();
        let mut converged = false;
        let mut separated = false;
        let mut iterations = 0;
        let mut ll = self.penalized_loglik(&beta, opts.ridge);
        while iterations < opts.max_iter {
            let Some((step, max_score)) = self.newton_direction(&beta, opts.ridge) else {
                return Err(Error::DegenerateFit("singular information matrix".into()));
            };
            if max_score < opts.tol {
                converged = true;
                break;
            }
            iterations += 1;
            // Step halving keeps the penalised likelihood monotone.
            let mut scale = 1.0;
            let mut candidate: Vec<f64>;
            let mut cand_ll;
            loop {
                candidate = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
                cand_ll = self.penalized_loglik(&candidate, opts.ridge);
                if cand_ll >= ll || scale < 1e-10 {
                    break;
                }
                scale *= 0.5;
            }
            beta = candidate;
            ll = cand_ll;
            let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
            if norm > SEPARATION_NORM {
                for b in beta.iter_mut() {
                    *b *= SEPARATION_NORM / norm;
                }
                separated = true;
                break;
            }
        }
        if !separated && self.is_binary() && self.separates(&beta) {
            separated = true;
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::DegenerateFit("non-finite coefficients".into()));
        }
        Ok(LogisticModel {
            intercept: beta[0],
            coefs: beta[1..].to_vec(),
            converged,
            iterations,
            separation_flag: separated,
        })
    }

    fn is_binary(&self) -> bool {
        self.targets.iter().all(|&t| t == 0.0 || t == 1.0)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// One penalised Newton step from `beta` (intercept first) on row-major
/// `rows` without an intercept column. Used by stochastic-approximation
/// fits, where a full solve per iteration is unnecessary.
pub fn newton_step(rows: &[f64], p: usize, y: &[f64], beta: &[f64], ridge: f64) -> Option<Vec<f64>> {
    let n = y.len();
    let w = p + 1;
    let mut score = DVector::<f64>::zeros(w);
    let mut info = DMatrix::<f64>::zeros(w, w);
    let mut x = vec![1.0; w];
    for i in 0..n {
        x[1..].copy_from_slice(&rows[i * p..(i + 1) * p]);
        let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
        let mu = sigmoid(eta);
        let r = y[i] - mu;
        let v = mu * (1.0 - mu);
        for a in 0..w {
            score[a] += x[a] * r;
            let va = v * x[a];
            for b in 0..=a {
                info[(a, b)] += va * x[b];
            }
        }
    }
    for a in 0..w {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    for a in 1..w {
        score[a] -= ridge * beta[a];
        info[(a, a)] += ridge;
    }
    let step = cholesky_jitter(&info)?.solve(&score);
    Some(beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_labels_are_degenerate() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let err = fit_logistic(&x, &[1.0, 1.0, 1.0], &LogisticOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateFit(_)), "{err}");
        assert!(fit_logistic(&DMatrix::zeros(0, 1), &[], &LogisticOptions::default()).is_err());
    }

    #[test]
    fn non_finite_design_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[f64::NAN, 1.0]);
        assert!(matches!(
            fit_logistic(&x, &[0.0, 1.0], &LogisticOptions::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn recovers_unit_slope() {
        // Fisher information per row at beta = 1 for N(0,1) features is about
        // 0.2, so the slope SE at n = 2e5 is ~0.005 and 0.03 is > 5 SE.
        let n = 200_000;
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|&v| (r.random::<f64>() < sigmoid(v)) as u8 as f64).collect();
        let m = fit_logistic(&DMatrix::from_vec(n, 1, x), &y, &LogisticOptions::default()).unwrap();
        assert!(m.converged);
        assert!((m.coefs[0] - 1.0).abs() < 0.03, "{}", m.coefs[0]);
        assert!(m.intercept.abs() < 0.03);
    }

    #[test]
    fn separated_pair_triggers_safeguard() {
        let x = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let m = fit_logistic(&x, &[0.0, 1.0], &LogisticOptions::default()).unwrap();
        assert!(m.separation_flag);
        assert!(m.params().iter().map(|b| b * b).sum::<f64>().sqrt() <= SEPARATION_NORM + 1e-9);
        assert!(m.params().iter().all(|b| b.is_finite()));
        let p = predict_proba(&m, &x).unwrap();
        assert!(p[0] < 0.5 && p[1] > 0.5);
    }

    #[test]
    fn prediction_examples() {
        let zero = LogisticModel::zero(2);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        assert_eq!(predict_proba(&zero, &x).unwrap(), vec![0.5, 0.5]);
        let m = LogisticModel {
            intercept: 0.0,
            coefs: vec![2.0, -1.0],
            ..LogisticModel::zero(2)
        };
        let p = predict_proba(&m, &DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(p[0], 0.7310585786300049, epsilon = 1e-15);
        assert!(predict_proba(&m, &DMatrix::zeros(1, 3)).is_err());
        let extreme = predict_proba(&m, &DMatrix::from_row_slice(1, 2, &[1e4, 0.0])).unwrap();
        assert_eq!(extreme[0], 1.0 - PROB_CLIP);
    }

    #[test]
    fn newton_step_from_optimum_is_stationary() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let n = 500;
        let rows: Vec<f64> = (0..n * 2).map(|_| r.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| (r.random::<f64>() < sigmoid(rows[2 * i] - 0.5 * rows[2 * i + 1])) as u8 as f64)
            .collect();
        let design = DMatrix::from_fn(n, 2, |i, j| rows[2 * i + j]);
        let m = fit_logistic(&design, &y, &LogisticOptions::default()).unwrap();
        let next = newton_step(&rows, 2, &y, &m.params(), 1e-8).unwrap();
        for (a, b) in next.iter().zip(m.params()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
    }
}
