#![allow(dead_code)]

use misslogit::gaussian::{GaussianParams, Pattern};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre integral of `f` over `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = a + p as f64 * h;
            x.iter()
                .zip(&w)
                .map(|(xi, wi)| wi * f(lo + 0.5 * h * (xi + 1.0)))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

pub fn normal_pdf(x: f64, mu: f64, var: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

pub fn phi(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// A random Gaussian component, pattern with at least one missing entry,
/// and an observed point drawn from the component's marginal.
pub struct Instance {
    pub params: GaussianParams,
    pub pattern: Pattern,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub x_obs: Vec<f64>,
}

pub fn random_instance<R: Rng>(rng: &mut R, max_d: usize) -> Instance {
    let d = rng.random_range(2..=max_d);
    let mut normal = |s: f64| s * rng.sample::<f64, _>(StandardNormal);
    let mu = DVector::from_fn(d, |_, _| normal(1.0));
    let a = DMatrix::from_fn(d, d, |_, _| normal(1.0));
    let sigma = &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.2;
    let beta: Vec<f64> = (0..d).map(|_| normal(1.0)).collect();
    let beta0 = normal(0.5);
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let params = GaussianParams::new(mu.clone(), sigma.clone()).unwrap();
    let pattern = loop {
        let bits: Vec<bool> = (0..d).map(|_| rng.random_bool(0.5)).collect();
        if bits.iter().any(|&b| b) && !bits.iter().all(|&b| b) {
            break Pattern::new(bits);
        }
    };
    let obs = pattern.obs().to_vec();
    let sub = DMatrix::from_fn(obs.len(), obs.len(), |i, j| sigma[(obs[i], obs[j])]);
    let l = sub.cholesky().unwrap().l();
    let z = DVector::from_fn(obs.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let shift = l * z;
    let x_obs = obs.iter().enumerate().map(|(i, &j)| mu[j] + shift[i]).collect();
    Instance {
        params,
        pattern,
        beta0,
        beta,
        x_obs,
    }
}
