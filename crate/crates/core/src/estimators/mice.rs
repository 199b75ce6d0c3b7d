//! Chained-equations multiple imputation with predictive mean matching.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use super::{observed_means, CoefReport, Diagnostics, MethodSpec};
use crate::datagen::{Dataset, Mask};
use crate::error::{Error, Result};
use crate::gaussian::cholesky_jitter;
use crate::logistic::{fit_logistic, LogisticModel, LogisticOptions};
use crate::rng::{derive_seed, stream, TAG_TEST};

const OLS_RIDGE: f64 = 1e-5;

/// Which inputs a column's imputation model sees.
#[derive(Clone, Debug)]
struct Predictors {
    j: usize,
    use_y: bool,
    mask_cols: Vec<usize>,
}

impl Predictors {
    fn width(&self, d: usize) -> usize {
        d + self.use_y as usize + self.mask_cols.len()
    }

    /// `[1, x_{-j}, y?, m_{mask_cols}]`
    fn fill(&self, x: &[f64], y: f64, m: &[bool], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        out.extend(x.iter().enumerate().filter(|&(c, _)| c != self.j).map(|(_, v)| *v));
        if self.use_y {
            out.push(y);
        }
        out.extend(self.mask_cols.iter().map(|&c| m[c] as u8 as f64));
    }
}

struct OlsFit {
    beta_hat: Vec<f64>,
    beta_dot: Vec<f64>,
}

/// Ridge-stabilised least squares plus one draw from the approximate
/// posterior of the coefficients.
fn ols_with_draw<R: Rng + ?Sized>(design: &[f64], p: usize, target: &[f64], rng: &mut R) -> Result<OlsFit> {
    let n = target.len();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for i in 0..n {
        let row = &design[i * p..(i + 1) * p];
        for a in 0..p {
            xty[a] += row[a] * target[i];
            for b in 0..=a {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    for a in 1..p {
        xtx[(a, a)] += OLS_RIDGE;
    }
    let chol = cholesky_jitter(&xtx)
        .ok_or_else(|| Error::Imputation("singular imputation regression".into()))?;
    let beta_hat = chol.solve(&xty);
    let rss: f64 = (0..n)
        .map(|i| {
            let row = &design[i * p..(i + 1) * p];
            let fit: f64 = row.iter().zip(beta_hat.iter()).map(|(a, b)| a * b).sum();
            (target[i] - fit).powi(2)
        })
        .sum();
    let df = (n as f64 - p as f64).max(1.0);
    let chi: f64 = ChiSquared::new(df).expect("positive df").sample(rng);
    let sigma = (rss / chi).sqrt();
    let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let shift = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Imputation("singular imputation regression".into()))?;
    let beta_dot = beta_hat.iter().zip(shift.iter()).map(|(b, s)| b + sigma * s).collect();
    Ok(OlsFit {
        beta_hat: beta_hat.iter().copied().collect(),
        beta_dot,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Donors sorted by predicted value.
#[derive(Clone, Debug)]
struct DonorPool {
    pred: Vec<f64>,
    value: Vec<f64>,
}

impl DonorPool {
    fn new(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        DonorPool {
            pred: pairs.iter().map(|p| p.0).collect(),
            value: pairs.iter().map(|p| p.1).collect(),
        }
    }

    fn len(&self) -> usize {
        self.pred.len()
    }

    /// Observed value of one of the `k` donors closest to `target`, drawn
    /// uniformly.
    fn draw<R: Rng + ?Sized>(&self, target: f64, k: usize, rng: &mut R) -> f64 {
        let n = self.len();
        let pos = self.pred.partition_point(|&v| v < target);
        let (mut lo, mut hi) = (pos, pos);
        while hi - lo < k {
            let take_left = match (lo > 0, hi < n) {
                (true, true) => target - self.pred[lo - 1] <= self.pred[hi] - target,
                (true, false) => true,
                (false, true) => false,
                (false, false) => break,
            };
            if take_left {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        self.value[lo + rng.random_range(0..hi - lo)]
    }
}

/// Column model used at prediction time (no outcome term).
#[derive(Clone, Debug)]
struct TestColumnModel {
    predictors: Predictors,
    beta_dot: Vec<f64>,
    donors: DonorPool,
}

#[derive(Clone, Debug)]
struct Imputation {
    model: LogisticModel,
    columns: Vec<TestColumnModel>,
}

#[derive(Clone, Debug)]
pub struct MiceState {
    d: usize,
    col_means: Vec<f64>,
    use_mask_feature: bool,
    donors: usize,
    cycles: usize,
    predict_seed: u64,
    imputations: Vec<Imputation>,
}

struct Chain<'a> {
    x: Vec<f64>,
    d: usize,
    y: &'a [f64],
    mask: &'a Mask,
}

impl Chain<'_> {
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn design(&self, pr: &Predictors, rows: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * pr.width(self.d));
        let mut buf = Vec::new();
        for &i in rows {
            pr.fill(self.row(i), self.y[i], self.mask.row(i), &mut buf);
            out.extend_from_slice(&buf);
        }
        out
    }
}

fn observed_rows(mask: &Mask, j: usize) -> (Vec<usize>, Vec<usize>) {
    (0..mask.nrows()).partition(|&i| !mask.get(i, j))
}

/// Drop the outcome coefficient and refit the intercept so the model has
/// zero mean residual on the training rows.
fn drop_outcome_term(beta: &[f64], pr: &Predictors, d: usize, design_no_y: &[f64], target: &[f64]) -> Vec<f64> {
    let mut reduced: Vec<f64> = beta[..d].to_vec();
    reduced.extend_from_slice(&beta[d + pr.use_y as usize..]);
    let p = reduced.len();
    let n = target.len();
    let resid: f64 = (0..n)
        .map(|i| target[i] - dot(&design_no_y[i * p + 1..(i + 1) * p], &reduced[1..]))
        .sum();
    reduced[0] = resid / n as f64;
    reduced
}

fn with_mask(x: &[f64], mask: &Mask, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(mask.nrows(), 2 * d, |i, j| {
        if j < d {
            x[i * d + j]
        } else {
            mask.get(i, j - d) as u8 as f64
        }
    })
}

fn logistic_design(x: &[f64], mask: &Mask, d: usize, use_mask_feature: bool) -> DMatrix<f64> {
    if use_mask_feature {
        with_mask(x, mask, d)
    } else {
        DMatrix::from_row_slice(mask.nrows(), d, x)
    }
}

struct ChainResult {
    imputation: Imputation,
    degenerate: usize,
}

fn run_chain(data: &Dataset, spec: &MethodSpec, col_means: &[f64], missing_cols: &[usize], seed: u64) -> Result<ChainResult> {
    let (n, d) = (data.n(), data.d());
    let mut rng = stream(seed, &[]);
    let y = data.y_f64();
    let mut x = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..d {
            x[i * d + j] = if data.mask.get(i, j) {
                col_means[j]
            } else {
                data.z_observed[(i, j)]
            };
        }
    }
    let mut chain = Chain {
        x,
        d,
        y: &y,
        mask: &data.mask,
    };
    let predictors_for = |j: usize, use_y: bool| Predictors {
        j,
        use_y,
        mask_cols: if spec.use_mask_in_imputation {
            missing_cols.iter().copied().filter(|&c| c != j).collect()
        } else {
            Vec::new()
        },
    };
    let mut degenerate = 0;
    let mut last_fit: Vec<Option<OlsFit>> = (0..d).map(|_| None).collect();
    let mut buf = Vec::new();
    for _ in 0..spec.chain_cycles {
        for &j in missing_cols {
            let pr = predictors_for(j, spec.use_y_in_imputation);
            let p = pr.width(d);
            let (obs, mis) = observed_rows(&data.mask, j);
            let target: Vec<f64> = obs.iter().map(|&i| chain.x[i * d + j]).collect();
            let design_obs = chain.design(&pr, &obs);
            let fit = ols_with_draw(&design_obs, p, &target, &mut rng)?;
            let pool_ok = obs.len() >= spec.pmm_donors;
            let pool = pool_ok.then(|| {
                DonorPool::new(
                    (0..obs.len())
                        .map(|r| (dot(&design_obs[r * p..(r + 1) * p], &fit.beta_hat), target[r]))
                        .collect(),
                )
            });
            if !pool_ok {
                degenerate += 1;
            }
            for &i in &mis {
                pr.fill(chain.row(i), y[i], data.mask.row(i), &mut buf);
                let pred = dot(&buf, &fit.beta_dot);
                chain.x[i * d + j] = match &pool {
                    Some(pool) => pool.draw(pred, spec.pmm_donors, &mut rng),
                    None => pred,
                };
            }
            last_fit[j] = Some(fit);
        }
    }

    let design = logistic_design(&chain.x, &data.mask, d, spec.use_mask_feature);
    let model = fit_logistic(&design, &y, &LogisticOptions::default())?;

    // Prediction-time column models, built on the completed data.
    let mut columns = Vec::with_capacity(d);
    for j in 0..d {
        let pr = predictors_for(j, false);
        let p = pr.width(d);
        let (obs, _) = observed_rows(&data.mask, j);
        let target: Vec<f64> = obs.iter().map(|&i| chain.x[i * d + j]).collect();
        let design_obs = chain.design(&pr, &obs);
        let (beta_hat, beta_dot) = match last_fit[j].take() {
            Some(fit) if spec.use_y_in_imputation => (
                drop_outcome_term(&fit.beta_hat, &pr_with_y(&pr), d, &design_obs, &target),
                drop_outcome_term(&fit.beta_dot, &pr_with_y(&pr), d, &design_obs, &target),
            ),
            Some(fit) => (fit.beta_hat, fit.beta_dot),
            None => {
                let fit = ols_with_draw(&design_obs, p, &target, &mut rng)?;
                (fit.beta_hat, fit.beta_dot)
            }
        };
        let donors = DonorPool::new(
            (0..obs.len())
                .map(|r| (dot(&design_obs[r * p..(r + 1) * p], &beta_hat), target[r]))
                .collect(),
        );
        columns.push(TestColumnModel {
            predictors: pr,
            beta_dot,
            donors,
        });
    }
    Ok(ChainResult {
        imputation: Imputation { model, columns },
        degenerate,
    })
}

fn pr_with_y(pr: &Predictors) -> Predictors {
    Predictors {
        use_y: true,
        ..pr.clone()
    }
}

pub(super) fn fit(data: &Dataset, spec: &MethodSpec, seed: u64) -> Result<(MiceState, CoefReport, Diagnostics)> {
    let d = data.d();
    let col_means = observed_means(&data.z_observed, &data.mask)?;
    let missing_cols: Vec<usize> = (0..d)
        .filter(|&j| (0..data.n()).any(|i| data.mask.get(i, j)))
        .collect();
    let chains: Vec<ChainResult> = (0..spec.k)
        .into_par_iter()
        .map(|k| run_chain(data, spec, &col_means, &missing_cols, derive_seed(seed, &[k as u64])))
        .collect::<Result<_>>()?;

    let k = chains.len() as f64;
    let mut pooled = vec![0.0; chains[0].imputation.model.params().len()];
    let mut diagnostics = Diagnostics::ok();
    let mut degenerate = 0;
    for c in &chains {
        for (acc, v) in pooled.iter_mut().zip(c.imputation.model.params()) {
            *acc += v / k;
        }
        diagnostics.converged &= c.imputation.model.converged;
        degenerate += c.degenerate;
    }
    if degenerate > 0 {
        log::warn!("MICE: {degenerate} column updates without enough donors used regression predictions");
        diagnostics
            .notes
            .push(format!("{degenerate} column updates fell back to regression predictions"));
    }
    let report = CoefReport {
        intercept: pooled[0],
        features: pooled[1..=d].to_vec(),
        mask: pooled[d + 1..].to_vec(),
    };
    let state = MiceState {
        d,
        col_means,
        use_mask_feature: spec.use_mask_feature,
        donors: spec.pmm_donors,
        cycles: spec.chain_cycles,
        predict_seed: derive_seed(seed, &[TAG_TEST]),
        imputations: chains.into_iter().map(|c| c.imputation).collect(),
    };
    Ok((state, report, diagnostics))
}

impl MiceState {
    pub fn n_imputations(&self) -> usize {
        self.imputations.len()
    }

    /// Logistic model fitted on imputed dataset `k`.
    pub fn model(&self, k: usize) -> &LogisticModel {
        &self.imputations[k].model
    }

    /// Probabilities under each imputation separately (`K` vectors).
    pub fn predict_per_imputation(&self, z: &DMatrix<f64>, mask: &Mask) -> Result<Vec<Vec<f64>>> {
        let d = self.d;
        let n = z.nrows();
        let missing_cols: Vec<usize> = (0..d).filter(|&j| (0..n).any(|i| mask.get(i, j))).collect();
        self.imputations
            .par_iter()
            .enumerate()
            .map(|(k, imp)| {
                let mut rng = stream(self.predict_seed, &[k as u64]);
                let mut x = vec![0.0; n * d];
                for i in 0..n {
                    for j in 0..d {
                        x[i * d + j] = if mask.get(i, j) { self.col_means[j] } else { z[(i, j)] };
                    }
                }
                let mut buf = Vec::new();
                for _ in 0..self.cycles {
                    for &j in &missing_cols {
                        let col = &imp.columns[j];
                        for i in (0..n).filter(|&i| mask.get(i, j)) {
                            col.predictors.fill(&x[i * d..(i + 1) * d], 0.0, mask.row(i), &mut buf);
                            let pred = dot(&buf, &col.beta_dot);
                            x[i * d + j] = if col.donors.len() >= self.donors {
                                col.donors.draw(pred, self.donors, &mut rng)
                            } else {
                                pred
                            };
                        }
                    }
                }
                let design = logistic_design(&x, mask, d, self.use_mask_feature);
                Ok((0..n)
                    .map(|i| {
                        let row: Vec<f64> = design.row(i).iter().copied().collect();
                        imp.model.prob(&row)
                    })
                    .collect())
            })
            .collect()
    }

    /// Pooled probabilities: the average over imputations.
    pub fn predict(&self, z: &DMatrix<f64>, mask: &Mask) -> Result<Vec<f64>> {
        let per = self.predict_per_imputation(z, mask)?;
        let k = per.len() as f64;
        let mut out = vec![0.0; z.nrows()];
        for probs in &per {
            for (o, p) in out.iter_mut().zip(probs) {
                *o += p / k;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn donor_draw_stays_among_nearest() {
        let pool = DonorPool::new((0..20).map(|i| (i as f64, 100.0 + i as f64)).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let v = pool.draw(9.2, 5, &mut rng);
            assert!((107.0..=111.0).contains(&v), "{v}");
        }
        for _ in 0..100 {
            let v = pool.draw(-50.0, 5, &mut rng);
            assert!((100.0..=104.0).contains(&v));
        }
    }

    #[test]
    fn ols_recovers_exact_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let design: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x]).collect();
        let target: Vec<f64> = xs.iter().map(|&x| 2.0 - 3.0 * x).collect();
        let fit = ols_with_draw(&design, 2, &target, &mut rng).unwrap();
        assert!((fit.beta_hat[0] - 2.0).abs() < 1e-4);
        assert!((fit.beta_hat[1] + 3.0).abs() < 1e-4);
        // Zero residuals: the posterior draw collapses onto the estimate.
        assert!((fit.beta_dot[1] - fit.beta_hat[1]).abs() < 1e-4);
    }

    #[test]
    fn dropping_outcome_term_centres_residuals() {
        let pr = Predictors {
            j: 1,
            use_y: true,
            mask_cols: vec![],
        };
        // d = 2: [1, x0, y]
        let beta = [0.5, 2.0, 1.0];
        let design_no_y = [1.0, 0.0, 1.0, 1.0, 1.0, 2.0];
        let target = [1.0, 3.0, 5.0];
        let r = drop_outcome_term(&beta, &pr, 2, &design_no_y, &target);
        assert_eq!(r.len(), 2);
        assert_eq!(r[1], 2.0);
        assert!((r[0] - 1.0).abs() < 1e-15);
    }
}
