use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::sigmoid;
use crate::logistic::{fit_logistic_weighted, LogisticOptions};
use crate::rng::stream;

/// Law of the missing second feature in the two-feature example where
/// `P(Y = 1 | X) = sigma(x1 + x2)` and only `x1` is seen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SecondFeature {
    Gaussian { var: f64 },
    /// `Exp` with mean `scale`, shifted to mean zero.
    CenteredExponential { scale: f64 },
}

impl SecondFeature {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            SecondFeature::Gaussian { var } => var.sqrt() * rng.sample::<f64, _>(StandardNormal),
            SecondFeature::CenteredExponential { scale } => {
                let u: f64 = rng.random();
                -scale * (1.0 - u).ln() - scale
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SecondFeature::Gaussian { .. } => "gaussian",
            SecondFeature::CenteredExponential { .. } => "exponential",
        }
    }
}

impl fmt::Display for SecondFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct IllustrationOptions {
    pub x_min: f64,
    pub x_max: f64,
    pub grid_points: usize,
    pub k: usize,
    pub cases: Vec<SecondFeature>,
    pub seed: u64,
}

impl Default for IllustrationOptions {
    fn default() -> Self {
        IllustrationOptions {
            x_min: -8.0,
            x_max: 8.0,
            grid_points: 161,
            k: 200_000,
            cases: vec![
                SecondFeature::Gaussian { var: 3.83 },
                SecondFeature::CenteredExponential { scale: 7.63 },
            ],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IllustrationCurve {
    pub case: SecondFeature,
    pub x1: Vec<f64>,
    /// Monte Carlo `E[sigma(x1 + X2)]` and its standard error.
    pub bayes: Vec<f64>,
    pub bayes_se: Vec<f64>,
    /// Best logistic curve `sigma(a + b x1)`, fitted to `bayes` over the grid.
    pub intercept: f64,
    pub slope: f64,
    pub fitted: Vec<f64>,
    pub max_deviation: f64,
}

/// Bayes probability curves of the two-feature example and their best
/// logistic approximations. All grid points share the same draws of `X2`.
pub fn illustrate_2d(opts: &IllustrationOptions) -> Result<Vec<IllustrationCurve>> {
    if opts.grid_points < 2 || opts.k < 2 || !(opts.x_max > opts.x_min) {
        return Err(Error::InvalidInput("illustration needs >= 2 grid points, k >= 2 and x_max > x_min".into()));
    }
    let step = (opts.x_max - opts.x_min) / (opts.grid_points - 1) as f64;
    let x1: Vec<f64> = (0..opts.grid_points).map(|i| opts.x_min + step * i as f64).collect();
    opts.cases
        .iter()
        .enumerate()
        .map(|(c, &case)| {
            let mut rng = stream(opts.seed, &[c as u64]);
            let draws: Vec<f64> = (0..opts.k).map(|_| case.draw(&mut rng)).collect();
            let kf = opts.k as f64;
            let (bayes, bayes_se): (Vec<f64>, Vec<f64>) = x1
                .iter()
                .map(|&x| {
                    let (s, s2) = draws.iter().fold((0.0, 0.0), |(s, s2), &v| {
                        let p = sigmoid(x + v);
                        (s + p, s2 + p * p)
                    });
                    let mean = s / kf;
                    let var = ((s2 - kf * mean * mean) / (kf - 1.0)).max(0.0);
                    (mean, (var / kf).sqrt())
                })
                .unzip();
            let design = DMatrix::from_column_slice(x1.len(), 1, &x1);
            let model = fit_logistic_weighted(&design, &bayes, None, &LogisticOptions::default())?;
            let fitted: Vec<f64> = x1.iter().map(|&x| model.prob(&[x])).collect();
            let max_deviation = fitted
                .iter()
                .zip(&bayes)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok(IllustrationCurve {
                case,
                x1: x1.clone(),
                bayes,
                bayes_se,
                intercept: model.intercept,
                slope: model.coefs[0],
                fitted,
                max_deviation,
            })
        })
        .collect()
}

pub fn write_illustration_csv<W: Write>(curves: &[IllustrationCurve], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["case", "x1", "bayes", "bayes_se", "best_logistic"])?;
    for c in curves {
        for i in 0..c.x1.len() {
            w.write_record([
                c.case.name().to_string(),
                c.x1[i].to_string(),
                c.bayes[i].to_string(),
                c.bayes_se[i].to_string(),
                c.fitted[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
