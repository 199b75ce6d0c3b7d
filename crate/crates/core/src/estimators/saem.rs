//! Stochastic-approximation EM for a Gaussian covariate model with a
//! logistic outcome, plus prediction by averaging over conditional draws.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{imputed_design, observed_means, Diagnostics, MethodSpec};
use crate::datagen::{Dataset, Mask};
use crate::error::{Error, Result};
use crate::gaussian::{condition, sigmoid, ConditionalGaussian, GaussianParams, MvnSampler, Pattern};
use crate::logistic::{fit_logistic, newton_step, LogisticModel, LogisticOptions};
use crate::rng::{derive_seed, stream, TAG_TEST};

/// Rows per E-step work unit; fixed so results do not depend on the
/// number of threads.
const CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaemOptions {
    pub iterations: usize,
    pub burn_in: usize,
    pub sweeps: usize,
    /// Convergence is judged on the change of the coefficients over this
    /// many final iterations.
    pub window: usize,
    pub tol: f64,
}

impl Default for SaemOptions {
    fn default() -> Self {
        SaemOptions {
            iterations: 500,
            burn_in: 100,
            sweeps: 5,
            window: 50,
            tol: 1e-2,
        }
    }
}

impl SaemOptions {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.sweeps == 0 {
            return Err(Error::Config("SAEM needs at least one iteration and sweep".into()));
        }
        if self.burn_in > self.iterations || self.window > self.iterations {
            return Err(Error::Config("SAEM burn-in and window must not exceed iterations".into()));
        }
        Ok(())
    }

    fn step_size(&self, t: usize) -> f64 {
        if t <= self.burn_in {
            1.0
        } else {
            1.0 / (t - self.burn_in) as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct SaemState {
    pub params: GaussianParams,
    /// Intercept first.
    pub beta: Vec<f64>,
    pub draws: usize,
    predict_seed: u64,
}

struct PatternKernel {
    cond: ConditionalGaussian,
    sampler: MvnSampler,
}

fn kernels(params: &GaussianParams, patterns: &[Pattern]) -> Result<BTreeMap<Pattern, PatternKernel>> {
    patterns
        .iter()
        .map(|p| {
            let cond = condition(params, p)?;
            let sampler = MvnSampler::new(DVector::zeros(cond.n_mis()), &cond.cond_cov)?;
            Ok((p.clone(), PatternKernel { cond, sampler }))
        })
        .collect()
}

fn eta(beta: &[f64], x: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

fn log_lik(beta: &[f64], x: &[f64], y: f64) -> f64 {
    let e = eta(beta, x);
    // log sigma(s) = -softplus(-s)
    let s = if y == 1.0 { e } else { -e };
    s.min(0.0) - (-s.abs()).exp().ln_1p()
}

/// Independence Metropolis-Hastings on one row's missing block, proposing
/// from the conditional Gaussian so the acceptance ratio is a likelihood
/// ratio.
#[allow(clippy::too_many_arguments)]
fn mh_row<R: Rng + ?Sized>(
    x: &mut [f64],
    pattern: &Pattern,
    kernel: &PatternKernel,
    beta: &[f64],
    y: f64,
    sweeps: usize,
    rng: &mut R,
    obs_buf: &mut Vec<f64>,
    prop: &mut Vec<f64>,
) {
    obs_buf.clear();
    obs_buf.extend(pattern.obs().iter().map(|&j| x[j]));
    let mean = kernel.cond.mean(obs_buf);
    prop.resize(pattern.mis().len(), 0.0);
    let mut current = log_lik(beta, x, y);
    let mut cand = x.to_vec();
    for _ in 0..sweeps {
        kernel.sampler.draw_shifted_into(rng, mean.as_slice(), prop);
        for (&j, &v) in pattern.mis().iter().zip(prop.iter()) {
            cand[j] = v;
        }
        let proposed = log_lik(beta, &cand, y);
        let u: f64 = rng.random();
        if u.ln() < proposed - current {
            x.copy_from_slice(&cand);
            current = proposed;
        } else {
            cand.copy_from_slice(x);
        }
    }
}

fn sufficient_stats(x: &[f64], n: usize, d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let mut s1 = DVector::zeros(d);
    let mut s2 = DMatrix::zeros(d, d);
    for i in 0..n {
        let r = &x[i * d..(i + 1) * d];
        for a in 0..d {
            s1[a] += r[a];
            for b in 0..=a {
                s2[(a, b)] += r[a] * r[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            s2[(b, a)] = s2[(a, b)];
        }
    }
    (s1, s2)
}

fn params_from_stats(s1: &DVector<f64>, s2: &DMatrix<f64>, n: usize) -> Result<GaussianParams> {
    let n = n as f64;
    let mu = s1 / n;
    let mut sigma = s2 / n - &mu * mu.transpose();
    sigma = (&sigma + sigma.transpose()) * 0.5;
    for j in 0..sigma.nrows() {
        sigma[(j, j)] = sigma[(j, j)].max(1e-10);
    }
    GaussianParams::new(mu, sigma)
}

pub(super) fn fit(data: &Dataset, spec: &MethodSpec, seed: u64) -> Result<(SaemState, Diagnostics)> {
    let opts = spec.saem;
    opts.validate()?;
    let (n, d) = (data.n(), data.d());
    let y = data.y_f64();
    let means = observed_means(&data.z_observed, &data.mask)?;
    let start = imputed_design(&data.z_observed, &data.mask, &means, false);
    let mut x: Vec<f64> = (0..n).flat_map(|i| start.row(i).iter().copied().collect::<Vec<_>>()).collect();

    let init = fit_logistic(&start, &y, &LogisticOptions::default())?;
    let mut beta = init.params();
    let (mut s1, mut s2) = sufficient_stats(&x, n, d);
    let mut params = params_from_stats(&s1, &s2, n)?;

    let groups = data.mask.group_by_pattern();
    let patterns: Vec<Pattern> = groups.keys().filter(|p| !p.is_complete()).cloned().collect();
    let incomplete: Vec<usize> = (0..n).filter(|&i| !data.mask.pattern(i).is_complete()).collect();
    let ridge = LogisticOptions::default().ridge;

    let mut diagnostics = Diagnostics::ok();
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(opts.iterations);
    let mut failed_steps = 0;
    for t in 1..=opts.iterations {
        if !incomplete.is_empty() {
            let ker = kernels(&params, &patterns)?;
            // Each chunk owns the rows it updates; gather their new values.
            let updates: Vec<Vec<(usize, Vec<f64>)>> = incomplete
                .par_chunks(CHUNK)
                .enumerate()
                .map(|(c, rows)| {
                    let mut rng = stream(seed, &[t as u64, c as u64]);
                    let (mut obs_buf, mut prop) = (Vec::new(), Vec::new());
                    rows.iter()
                        .map(|&i| {
                            let mut row = x[i * d..(i + 1) * d].to_vec();
                            let p = data.mask.pattern(i);
                            mh_row(&mut row, &p, &ker[&p], &beta, y[i], opts.sweeps, &mut rng, &mut obs_buf, &mut prop);
                            (i, row)
                        })
                        .collect()
                })
                .collect();
            for (i, row) in updates.into_iter().flatten() {
                x[i * d..(i + 1) * d].copy_from_slice(&row);
            }
        }

        let gamma = opts.step_size(t);
        let (t1, t2) = sufficient_stats(&x, n, d);
        s1 += (t1 - &s1) * gamma;
        s2 += (t2 - &s2) * gamma;
        params = params_from_stats(&s1, &s2, n)?;

        match newton_step(&x, d, &y, &beta, ridge) {
            Some(next) if next.iter().all(|v| v.is_finite()) => {
                for (b, nb) in beta.iter_mut().zip(next) {
                    *b += gamma * (nb - *b);
                }
            }
            _ => failed_steps += 1,
        }
        history.push(beta.clone());
    }

    if failed_steps > 0 {
        diagnostics.notes.push(format!("{failed_steps} singular coefficient updates skipped"));
    }
    let last = &history[history.len() - 1];
    let earlier = &history[history.len().saturating_sub(opts.window + 1)];
    let drift = last.iter().zip(earlier).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if drift >= opts.tol || beta.iter().map(|b| b.abs()).fold(0.0, f64::max) > crate::logistic::SEPARATION_NORM {
        diagnostics.converged = false;
        diagnostics
            .notes
            .push(format!("coefficients moved {drift:.3e} over the last {} iterations", opts.window));
    }
    Ok((
        SaemState {
            params,
            beta,
            draws: spec.k,
            predict_seed: derive_seed(seed, &[TAG_TEST]),
        },
        diagnostics,
    ))
}

impl SaemState {
    pub fn model(&self) -> LogisticModel {
        LogisticModel {
            intercept: self.beta[0],
            coefs: self.beta[1..].to_vec(),
            converged: true,
            iterations: 0,
            separation_flag: false,
        }
    }

    /// Average of `sigma(beta^T x)` over `draws` completions of each row
    /// from the fitted conditional Gaussian. Row `i` uses its own stream.
    pub fn predict(&self, z: &DMatrix<f64>, mask: &Mask) -> Result<Vec<f64>> {
        let (n, d) = z.shape();
        let model = self.model();
        let groups = mask.group_by_pattern();
        let patterns: Vec<Pattern> = groups.keys().filter(|p| !p.is_complete()).cloned().collect();
        let ker = kernels(&self.params, &patterns)?;
        Ok((0..n)
            .into_par_iter()
            .map(|i| {
                let p = mask.pattern(i);
                let mut x: Vec<f64> = (0..d).map(|j| z[(i, j)]).collect();
                if p.is_complete() {
                    return model.prob(&x);
                }
                let k = &ker[&p];
                let x_obs: Vec<f64> = p.obs().iter().map(|&j| x[j]).collect();
                let mean = k.cond.mean(&x_obs);
                let mut rng = stream(self.predict_seed, &[i as u64]);
                let mut draw = vec![0.0; p.mis().len()];
                let mut acc = 0.0;
                for _ in 0..self.draws {
                    k.sampler.draw_shifted_into(&mut rng, mean.as_slice(), &mut draw);
                    for (&j, &v) in p.mis().iter().zip(&draw) {
                        x[j] = v;
                    }
                    acc += sigmoid(eta(&self.beta, &x));
                }
                (acc / self.draws as f64).clamp(crate::logistic::PROB_CLIP, 1.0 - crate::logistic::PROB_CLIP)
            })
            .collect())
    }
}
