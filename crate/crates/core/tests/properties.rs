mod common;

use common::{integrate, normal_pdf, phi, random_instance};
use misslogit::datagen::gen_dataset;
use misslogit::estimators::fit;
use misslogit::gaussian::condition;
use misslogit::harness::materialize;
use misslogit::logistic::{fit_logistic_weighted, LogisticOptions};
use misslogit::metrics::{mcb, pav_recalibrate};
use misslogit::oracle::{bayes_prob_probit, pattern_probit_params};
use misslogit::rng::stream;
use misslogit::{MethodSpec, ScenarioConfig, ScenarioKind};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn log_density(x: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let chol = sigma.clone().cholesky().unwrap();
    let r = x - mu;
    let quad = r.dot(&chol.solve(&r));
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    -0.5 * (quad + log_det + x.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

fn pick(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

fn pick2(a: &DMatrix<f64>, r: &[usize], c: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(r.len(), c.len(), |i, j| a[(r[i], c[j])])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_density_factorizes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 6);
        let (obs, mis) = (inst.pattern.obs(), inst.pattern.mis());
        let (mu, sigma) = (inst.params.mu(), inst.params.sigma());
        let x_mis: Vec<f64> = mis.iter().map(|&j| mu[j] + rng.sample::<f64, _>(StandardNormal)).collect();
        let mut x = DVector::zeros(mu.len());
        for (i, &j) in obs.iter().enumerate() {
            x[j] = inst.x_obs[i];
        }
        for (i, &j) in mis.iter().enumerate() {
            x[j] = x_mis[i];
        }
        let cond = condition(&inst.params, &inst.pattern).unwrap();
        let joint = log_density(&x, mu, sigma);
        let marginal = log_density(&DVector::from_column_slice(&inst.x_obs), &pick(mu, obs), &pick2(sigma, obs, obs));
        let conditional = log_density(&DVector::from_column_slice(&x_mis), &cond.mean(&inst.x_obs), &cond.cond_cov);
        prop_assert!((joint - marginal - conditional).abs() < 1e-8 * (1.0 + joint.abs()));
    }

    #[test]
    fn probit_marginalizes_over_missing_block(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 6);
        let (obs, mis) = (inst.pattern.obs(), inst.pattern.mis());
        let (mu, sigma) = (inst.params.mu(), inst.params.sigma());
        // law of beta_mis^T X_mis given x_obs, by direct Schur complement
        let s_oo = pick2(sigma, obs, obs);
        let s_mo = pick2(sigma, mis, obs);
        let gain = &s_mo * s_oo.clone().try_inverse().unwrap();
        let resid = DVector::from_column_slice(&inst.x_obs) - pick(mu, obs);
        let m = pick(mu, mis) + &gain * resid;
        let c = pick2(sigma, mis, mis) - &gain * s_mo.transpose();
        let b = DVector::from_fn(mis.len(), |i, _| inst.beta[mis[i]]);
        let (mt, vt) = (b.dot(&m), b.dot(&(&c * &b)).max(1e-300));
        let shift = inst.beta0 + obs.iter().enumerate().map(|(i, &j)| inst.beta[j] * inst.x_obs[i]).sum::<f64>();
        let sd = vt.sqrt();
        let quad = integrate(|t| phi(shift + t) * normal_pdf(t, mt, vt), mt - 12.0 * sd, mt + 12.0 * sd, 32, 20);
        let pp = pattern_probit_params(inst.beta0, &inst.beta, &inst.params, &inst.pattern).unwrap();
        let closed = bayes_prob_probit(&inst.x_obs, &pp).unwrap();
        prop_assert!((quad - closed).abs() < 1e-9, "quadrature {quad} closed form {closed}");
    }

    #[test]
    fn logistic_fit_zeroes_the_gradient(seed in any::<u64>(), n in 30usize..200, p in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.9)).collect();
        let opts = LogisticOptions::default();
        let model = fit_logistic_weighted(&x, &t, None, &opts).unwrap();
        prop_assert!(model.converged);
        let mut grad = vec![0.0; p + 1];
        for i in 0..n {
            let row: Vec<f64> = (0..p).map(|j| x[(i, j)]).collect();
            let r = t[i] - model.prob(&row);
            grad[0] += r;
            for j in 0..p {
                grad[j + 1] += r * row[j];
            }
        }
        let worst = grad.iter().map(|g| g.abs()).fold(0.0, f64::max) / n as f64;
        prop_assert!(worst < 1e-6, "max |gradient| / n = {worst}");
    }

    #[test]
    fn pav_is_monotone_and_mean_preserving(
        data in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..300)
    ) {
        let probs: Vec<f64> = data.iter().map(|d| d.0).collect();
        let y: Vec<u8> = data.iter().map(|d| d.1 as u8).collect();
        let fitted = pav_recalibrate(&probs, &y).unwrap();
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
        for w in order.windows(2) {
            prop_assert!(fitted[w[0]] <= fitted[w[1]] + 1e-12);
        }
        let (a, b): (f64, f64) = (fitted.iter().sum(), y.iter().map(|&v| v as f64).sum());
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(mcb(&probs, &y).unwrap() >= -1e-12);
    }

    #[test]
    fn mask_features_absorb_the_imputed_constant(seed in 0u64..1_000, c in -3.0f64..3.0) {
        let (scenario, mixture) = materialize(&ScenarioConfig::new(ScenarioKind::Mcar, seed)).unwrap();
        let train = gen_dataset(&scenario, &mixture, 600, &mut stream(seed, &[1])).unwrap();
        let test = gen_dataset(&scenario, &mixture, 200, &mut stream(seed, &[2])).unwrap();
        let a = fit(&MethodSpec::constant(c, true), &train, 0).unwrap();
        let b = fit(&MethodSpec::mean(true), &train, 0).unwrap();
        let pa = a.predict(&test.z_observed, &test.mask).unwrap();
        let pb = b.predict(&test.z_observed, &test.mask).unwrap();
        let gap = pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-6, "prediction gap {gap}");
    }
}
