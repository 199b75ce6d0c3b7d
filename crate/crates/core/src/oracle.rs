//! Bayes probabilities `P[Y = 1 | X_obs = x, M = m]` under a Gaussian
//! pattern mixture.
//!
//! Three routes are provided:
//!
//! * the exact Probit formula, `Phi((alpha0 + alpha^T x) / sqrt(1 + s2))`;
//! * its logistic counterpart with the `pi / 8` rescaling, within
//!   `2 * sup |eps|` of the truth for a logistic outcome model;
//! * Monte Carlo integration over `X_mis | X_obs`, optionally through a
//!   coordinatewise feature transform acting on a latent Gaussian.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{FeatureTransform, Mask, PatternMixture};
use crate::error::{Error, Result};
use crate::gaussian::{condition, sigmoid, std_normal_cdf, ConditionalGaussian, GaussianParams, MvnSampler, Pattern};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    Logistic,
    Probit,
}

impl Link {
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Link::Logistic => sigmoid(t),
            Link::Probit => std_normal_cdf(t),
        }
    }
}

/// Which closed form a [`PatternProbit`] is evaluated with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbitScale {
    /// `Phi(u / sqrt(1 + s2))`
    Probit,
    /// `sigma(u / sqrt(1 + (pi/8) s2))`
    LogisticPi8,
}

/// Pattern-wise reduced model: intercept, slopes on the observed features and
/// the variance of the unobserved part of the linear predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternProbit {
    pub alpha0: f64,
    pub alpha: Vec<f64>,
    pub sigma_tilde2: f64,
    pub scale: ProbitScale,
}

impl PatternProbit {
    pub fn linear_predictor(&self, x_obs: &[f64]) -> Result<f64> {
        if x_obs.len() != self.alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: self.alpha.len(),
                got: x_obs.len(),
            });
        }
        Ok(self.alpha0 + self.alpha.iter().zip(x_obs).map(|(a, x)| a * x).sum::<f64>())
    }

    /// Evaluate with the formula selected by `scale`.
    pub fn prob(&self, x_obs: &[f64]) -> Result<f64> {
        match self.scale {
            ProbitScale::Probit => bayes_prob_probit(x_obs, self),
            ProbitScale::LogisticPi8 => bayes_prob_logistic(x_obs, self),
        }
    }

    pub fn with_scale(mut self, scale: ProbitScale) -> Self {
        self.scale = scale;
        self
    }
}

pub fn pattern_probit_params(
    beta0: f64,
    beta: &[f64],
    params_m: &GaussianParams,
    pattern: &Pattern,
) -> Result<PatternProbit> {
    if beta.len() != params_m.dim() {
        return Err(Error::DimensionMismatch {
            expected: params_m.dim(),
            got: beta.len(),
        });
    }
    let cond = condition(params_m, pattern)?;
    Ok(probit_from_conditional(beta0, beta, pattern, &cond))
}

fn probit_from_conditional(
    beta0: f64,
    beta: &[f64],
    pattern: &Pattern,
    cond: &ConditionalGaussian,
) -> PatternProbit {
    let (obs, mis) = (pattern.obs(), pattern.mis());
    let beta_mis: Vec<f64> = mis.iter().map(|&j| beta[j]).collect();
    // alpha = beta_obs + coef^T beta_mis, alpha0 = beta0 + beta_mis^T offset
    let alpha = obs
        .iter()
        .enumerate()
        .map(|(c, &j)| beta[j] + (0..mis.len()).map(|r| cond.coef[(r, c)] * beta_mis[r]).sum::<f64>())
        .collect();
    let alpha0 = beta0 + beta_mis.iter().zip(cond.offset.iter()).map(|(b, o)| b * o).sum::<f64>();
    let mut s2 = 0.0;
    for r in 0..mis.len() {
        for c in 0..mis.len() {
            s2 += beta_mis[r] * cond.cond_cov[(r, c)] * beta_mis[c];
        }
    }
    PatternProbit {
        alpha0,
        alpha,
        sigma_tilde2: s2.max(0.0),
        scale: ProbitScale::Probit,
    }
}

pub fn bayes_prob_probit(x_obs: &[f64], pp: &PatternProbit) -> Result<f64> {
    let u = pp.linear_predictor(x_obs)?;
    Ok(std_normal_cdf(u / (1.0 + pp.sigma_tilde2).sqrt()))
}

pub fn bayes_prob_logistic(x_obs: &[f64], pp: &PatternProbit) -> Result<f64> {
    let u = pp.linear_predictor(x_obs)?;
    let s = (1.0 + std::f64::consts::PI / 8.0 * pp.sigma_tilde2).sqrt();
    Ok(sigmoid(u / s))
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
}

/// Precomputed conditional law for one pattern, reusable across rows.
pub struct PatternOracle<'a> {
    pattern: Pattern,
    beta0: f64,
    beta: Vec<f64>,
    cond: ConditionalGaussian,
    sampler: Option<MvnSampler>,
    transform: Option<&'a dyn FeatureTransform>,
}

impl<'a> PatternOracle<'a> {
    pub fn new(
        params_m: &GaussianParams,
        pattern: &Pattern,
        beta0: f64,
        beta: &[f64],
        transform: Option<&'a dyn FeatureTransform>,
    ) -> Result<Self> {
        if beta.len() != params_m.dim() {
            return Err(Error::DimensionMismatch {
                expected: params_m.dim(),
                got: beta.len(),
            });
        }
        let cond = condition(params_m, pattern)?;
        let sampler = if cond.n_mis() > 0 {
            Some(MvnSampler::new(cond.offset.clone(), &cond.cond_cov)?)
        } else {
            None
        };
        Ok(PatternOracle {
            pattern: pattern.clone(),
            beta0,
            beta: beta.to_vec(),
            cond,
            sampler,
            transform,
        })
    }

    pub fn probit_params(&self) -> PatternProbit {
        probit_from_conditional(self.beta0, &self.beta, &self.pattern, &self.cond)
    }

    /// Average of `link(beta0 + beta^T z)` over `k` completions of the row.
    pub fn mc<R: Rng + ?Sized>(&self, z_obs: &[f64], k: usize, link: Link, rng: &mut R) -> Result<McEstimate> {
        let (obs, mis) = (self.pattern.obs(), self.pattern.mis());
        if z_obs.len() != obs.len() {
            return Err(Error::DimensionMismatch {
                expected: obs.len(),
                got: z_obs.len(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidInput("Monte Carlo sample count must be >= 1".into()));
        }
        let x_obs: Vec<f64> = match self.transform {
            Some(t) => obs
                .iter()
                .zip(z_obs)
                .map(|(&j, &z)| t.inverse(j, z))
                .collect::<Result<_>>()?,
            None => z_obs.to_vec(),
        };
        let Some(sampler) = &self.sampler else {
            let eta = self.beta0 + obs.iter().zip(z_obs).map(|(&j, &z)| self.beta[j] * z).sum::<f64>();
            return Ok(McEstimate {
                mean: link.apply(eta),
                se: 0.0,
            });
        };
        let cond_mean: Vec<f64> = self.cond.mean(&x_obs).iter().copied().collect();
        let mut x_mis = vec![0.0; mis.len()];
        let d = self.pattern.dim();
        let mut full = vec![0.0; d];
        for (&j, &x) in obs.iter().zip(&x_obs) {
            full[j] = x;
        }
        let fixed = self.beta0 + obs.iter().zip(z_obs).map(|(&j, &z)| self.beta[j] * z).sum::<f64>();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..k {
            sampler.draw_shifted_into(rng, &cond_mean, &mut x_mis);
            let eta = match self.transform {
                Some(t) => {
                    for (&j, &x) in mis.iter().zip(&x_mis) {
                        full[j] = x;
                    }
                    self.beta0
                        + (0..d)
                            .map(|j| self.beta[j] * t.forward(j, full[j]))
                            .sum::<f64>()
                }
                None => fixed + mis.iter().zip(&x_mis).map(|(&j, &x)| self.beta[j] * x).sum::<f64>(),
            };
            let p = link.apply(eta);
            sum += p;
            sum_sq += p * p;
        }
        let kf = k as f64;
        let mean = sum / kf;
        let var = if k > 1 {
            ((sum_sq - kf * mean * mean) / (kf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(McEstimate {
            mean,
            se: (var / kf).sqrt(),
        })
    }
}

/// Monte Carlo Bayes probability for a single incomplete row.
#[allow(clippy::too_many_arguments)]
pub fn bayes_prob_mc<R: Rng + ?Sized>(
    z_obs: &[f64],
    pattern: &Pattern,
    params_m: &GaussianParams,
    beta0: f64,
    beta: &[f64],
    k: usize,
    link: Link,
    transform: Option<&dyn FeatureTransform>,
    rng: &mut R,
) -> Result<McEstimate> {
    PatternOracle::new(params_m, pattern, beta0, beta, transform)?.mc(z_obs, k, link, rng)
}

fn observed_values(z: &DMatrix<f64>, i: usize, pattern: &Pattern) -> Vec<f64> {
    pattern.obs().iter().map(|&j| z[(i, j)]).collect()
}

/// Monte Carlo Bayes probabilities for every row of an incomplete matrix.
/// Row `i` uses its own stream derived from `(seed, i)`, so the output does
/// not depend on how rows are partitioned across threads.
#[allow(clippy::too_many_arguments)]
pub fn bayes_probs_mc(
    z: &DMatrix<f64>,
    mask: &Mask,
    mixture: &PatternMixture,
    beta0: f64,
    beta: &[f64],
    k: usize,
    link: Link,
    transform: Option<&dyn FeatureTransform>,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    let groups = mask.group_by_pattern();
    let oracles = groups
        .keys()
        .map(|p| PatternOracle::new(mixture.params_for(p)?, p, beta0, beta, transform).map(|o| (p.clone(), o)))
        .collect::<Result<std::collections::BTreeMap<_, _>>>()?;
    (0..mask.nrows())
        .into_par_iter()
        .map(|i| {
            let p = mask.pattern(i);
            let mut r = rng::stream(seed, &[i as u64]);
            oracles[&p].mc(&observed_values(z, i, &p), k, link, &mut r)
        })
        .collect()
}

/// Closed-form Bayes probabilities (Probit or rescaled logistic) per row.
pub fn bayes_probs_closed_form(
    z: &DMatrix<f64>,
    mask: &Mask,
    mixture: &PatternMixture,
    beta0: f64,
    beta: &[f64],
    scale: ProbitScale,
) -> Result<Vec<f64>> {
    let groups = mask.group_by_pattern();
    let mut out = vec![0.0; mask.nrows()];
    for (p, rows) in groups {
        let pp = pattern_probit_params(beta0, beta, mixture.params_for(&p)?, &p)?.with_scale(scale);
        for i in rows {
            out[i] = pp.prob(&observed_values(z, i, &p))?;
        }
    }
    Ok(out)
}

/// Probit-vs-rescaled-logistic gap `Phi(t) - sigma(t sqrt(8/pi))`.
pub fn epsilon(t: f64) -> f64 {
    std_normal_cdf(t) - sigmoid(t * (8.0 / std::f64::consts::PI).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSup {
    pub value: f64,
    pub argmax: f64,
}

/// `sup_t |epsilon(t)|` over `[-10, 10]`: a fine grid scan followed by
/// golden-section refinement around the best grid point.
pub fn epsilon_sup() -> EpsilonSup {
    let (lo, hi, steps) = (-10.0, 10.0, 20_000);
    let h = (hi - lo) / steps as f64;
    let abs_eps = |t: f64| epsilon(t).abs();
    let best = (0..=steps)
        .map(|i| lo + i as f64 * h)
        .fold((lo, abs_eps(lo)), |acc, t| {
            let v = abs_eps(t);
            if v > acc.1 {
                (t, v)
            } else {
                acc
            }
        });
    let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while (b - a).abs() > 1e-12 {
        if abs_eps(c) > abs_eps(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let t = 0.5 * (a + b);
    let v = abs_eps(t);
    if v >= best.1 {
        EpsilonSup { value: v, argmax: t }
    } else {
        EpsilonSup {
            value: best.1,
            argmax: best.0,
        }
    }
}
