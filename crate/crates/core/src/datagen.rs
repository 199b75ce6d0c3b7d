//! Synthetic `(X, M, Z, Y)` generation for the four simulation scenarios.
//!
//! Covariates follow a Gaussian pattern mixture: each row first draws its
//! missingness pattern, then its complete covariates from that pattern's
//! Gaussian. Labels come from a logistic model without intercept.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{cholesky_jitter, sigmoid, toeplitz_cov, GaussianParams, MvnSampler, Pattern};

/// Offset of the exponential feature so its mean is close to zero.
pub const NONLINEAR_C3: f64 = -1.67;
/// Offset of the non-monotonic feature.
pub const NONLINEAR_C5: f64 = 2.0;

const MIXTURE_REDRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "MCAR")]
    Mcar,
    #[serde(rename = "MAR")]
    Mar,
    #[serde(rename = "MNAR")]
    Mnar,
    #[serde(rename = "NONLINEAR")]
    Nonlinear,
}

impl ScenarioKind {
    pub fn default_rho(self) -> f64 {
        match self {
            ScenarioKind::Nonlinear => 0.95,
            _ => 0.65,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Mcar => "MCAR",
            ScenarioKind::Mar => "MAR",
            ScenarioKind::Mnar => "MNAR",
            ScenarioKind::Nonlinear => "NONLINEAR",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_d() -> usize {
    5
}

fn default_miss_prob() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Toeplitz correlation; `None` means the scenario default.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "default_miss_prob")]
    pub miss_prob: f64,
    /// Outcome coefficients; drawn from `N(0, I)` with `seed` when absent.
    #[serde(default)]
    pub beta_star: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        ScenarioConfig {
            kind,
            d: 5,
            rho: None,
            miss_prob: 0.25,
            beta_star: None,
            seed,
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho.unwrap_or_else(|| self.kind.default_rho())
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.miss_prob) {
            return Err(Error::Config(format!(
                "miss_prob must lie in [0, 1), got {}",
                self.miss_prob
            )));
        }
        if !(self.rho().abs() < 1.0) {
            return Err(Error::Config(format!("|rho| must be < 1, got {}", self.rho())));
        }
        if let Some(b) = &self.beta_star {
            if b.len() != self.d {
                return Err(Error::Config(format!(
                    "beta_star has length {}, expected d = {}",
                    b.len(),
                    self.d
                )));
            }
        }
        match self.kind {
            ScenarioKind::Mar if self.d < 3 => {
                Err(Error::Config("MAR needs d >= 3 (two always-observed features)".into()))
            }
            ScenarioKind::Nonlinear if self.d < 5 => {
                Err(Error::Config("NONLINEAR needs d >= 5".into()))
            }
            _ => Ok(()),
        }
    }

    /// Returns a copy with `beta_star` filled in (drawn from `N(0, I)` using
    /// the scenario seed when not supplied).
    pub fn with_beta_star(&self) -> ScenarioConfig {
        let mut out = self.clone();
        if out.beta_star.is_none() {
            let mut rng = crate::rng::stream(self.seed, &[crate::rng::TAG_BETA]);
            out.beta_star = Some((0..self.d).map(|_| rng.sample(StandardNormal)).collect());
        }
        out
    }

    pub fn beta_star(&self) -> Result<&[f64]> {
        self.beta_star
            .as_deref()
            .ok_or_else(|| Error::Config("beta_star has not been drawn".into()))
    }

    /// Per-feature missingness probabilities of the mask generator.
    pub fn mask_probs(&self) -> Vec<f64> {
        match self.kind {
            ScenarioKind::Mar => (0..self.d)
                .map(|j| if j < MAR_ALWAYS_OBSERVED { 0.0 } else { self.miss_prob })
                .collect(),
            _ => vec![self.miss_prob; self.d],
        }
    }
}

/// Number of leading features never missing in the MAR scenario.
pub const MAR_ALWAYS_OBSERVED: usize = 2;

/// Independent Bernoulli mask entries, redrawing any all-missing row.
pub fn gen_mask<R: Rng + ?Sized>(probs: &[f64], n: usize, rng: &mut R) -> Result<Mask> {
    let d = probs.len();
    if d == 0 {
        return Err(Error::InvalidInput("mask dimension must be positive".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!(
            "missingness probability {p} outside [0, 1): all-missing rows could not be excluded"
        )));
    }
    let mut bits = vec![false; n * d];
    for row in bits.chunks_mut(d) {
        loop {
            for (b, &p) in row.iter_mut().zip(probs) {
                *b = rng.random::<f64>() < p;
            }
            if !row.iter().all(|&b| b) {
                break;
            }
        }
    }
    Ok(Mask { bits, d })
}

/// Row-major boolean missingness matrix (`true` = missing).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    bits: Vec<bool>,
    d: usize,
}

impl Mask {
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged mask rows".into()));
        }
        Ok(Mask {
            bits: rows.iter().flatten().copied().collect(),
            d,
        })
    }

    pub fn none(n: usize, d: usize) -> Self {
        Mask {
            bits: vec![false; n * d],
            d,
        }
    }

    pub fn nrows(&self) -> usize {
        if self.d == 0 {
            0
        } else {
            self.bits.len() / self.d
        }
    }

    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.d + j]
    }

    pub fn pattern(&self, i: usize) -> Pattern {
        Pattern::new(self.row(i).to_vec())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Mask {
        Mask {
            bits: rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            d: self.d,
        }
    }

    pub fn any_missing(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    /// Row indices grouped by pattern, in pattern order.
    pub fn group_by_pattern(&self) -> BTreeMap<Pattern, Vec<usize>> {
        let mut groups: BTreeMap<Pattern, Vec<usize>> = BTreeMap::new();
        for i in 0..self.nrows() {
            groups.entry(self.pattern(i)).or_default().push(i);
        }
        groups
    }
}

/// Per-pattern Gaussian parameters `X | M = m ~ N(mu_m, Sigma_m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "structure", rename_all = "snake_case")]
pub enum PatternMixture {
    /// One Gaussian for every pattern (MCAR).
    Shared { params: GaussianParams },
    /// Parameters keyed by the sub-pattern over the features at index
    /// `always_observed..d` (MAR block design).
    Blocked {
        always_observed: usize,
        by_subpattern: BTreeMap<Pattern, GaussianParams>,
    },
    /// Arbitrary parameters per admissible pattern (MNAR).
    PerPattern { by_pattern: BTreeMap<Pattern, GaussianParams> },
}

impl PatternMixture {
    pub fn params_for(&self, pattern: &Pattern) -> Result<&GaussianParams> {
        let missing = || Error::InvalidInput(format!("no mixture component for pattern {pattern}"));
        match self {
            PatternMixture::Shared { params } => Ok(params),
            PatternMixture::Blocked {
                always_observed,
                by_subpattern,
            } => {
                if pattern.bits()[..*always_observed].iter().any(|&b| b) {
                    return Err(missing());
                }
                let sub = Pattern::new(pattern.bits()[*always_observed..].to_vec());
                by_subpattern.get(&sub).ok_or_else(missing)
            }
            PatternMixture::PerPattern { by_pattern } => by_pattern.get(pattern).ok_or_else(missing),
        }
    }

    /// Number of distinct parameter sets stored.
    pub fn n_components(&self) -> usize {
        match self {
            PatternMixture::Shared { .. } => 1,
            PatternMixture::Blocked { by_subpattern, .. } => by_subpattern.len(),
            PatternMixture::PerPattern { by_pattern } => by_pattern.len(),
        }
    }
}

/// `sigma_m [rho_m^|i-j|]` with `rho_m ~ U(-1, 1)`, `sigma_m ~ U(0, 1)` and
/// `mu_m ~ N(0, 0.5 I)`, redrawn while the covariance fails to factor.
fn random_toeplitz_block<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<GaussianParams> {
    for _ in 0..MIXTURE_REDRAWS {
        let rho = rng.random_range(-1.0..1.0);
        let scale: f64 = rng.random::<f64>();
        let mu: Vec<f64> = (0..k)
            .map(|_| 0.5f64.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if scale <= 0.0 {
            continue;
        }
        let sigma = toeplitz_cov(rho, k, scale)?;
        if cholesky_jitter(&sigma).is_none() {
            continue;
        }
        return GaussianParams::new(DVector::from_vec(mu), sigma);
    }
    Err(Error::NotPositiveDefinite {
        context: format!("random Toeplitz block after {MIXTURE_REDRAWS} redraws"),
    })
}

pub fn gen_mixture<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<PatternMixture> {
    config.validate()?;
    let d = config.d;
    match config.kind {
        ScenarioKind::Mcar | ScenarioKind::Nonlinear => Ok(PatternMixture::Shared {
            params: GaussianParams::new(DVector::zeros(d), toeplitz_cov(config.rho(), d, 1.0)?)?,
        }),
        ScenarioKind::Mnar => {
            let mut by_pattern = BTreeMap::new();
            for p in Pattern::admissible(d) {
                by_pattern.insert(p, random_toeplitz_block(d, rng)?);
            }
            Ok(PatternMixture::PerPattern { by_pattern })
        }
        ScenarioKind::Mar => {
            let head = MAR_ALWAYS_OBSERVED;
            let tail = d - head;
            let tail_cov = toeplitz_cov(config.rho(), tail, 1.0)?;
            let mut by_subpattern = BTreeMap::new();
            for code in 0..(1usize << tail) {
                let block = random_toeplitz_block(head, rng)?;
                let mut mu = DVector::zeros(d);
                let mut sigma = DMatrix::zeros(d, d);
                for i in 0..head {
                    mu[i] = block.mu()[i];
                    for j in 0..head {
                        sigma[(i, j)] = block.sigma()[(i, j)];
                    }
                }
                for i in 0..tail {
                    for j in 0..tail {
                        sigma[(head + i, head + j)] = tail_cov[(i, j)];
                    }
                }
                by_subpattern.insert(Pattern::from_code(code, tail), GaussianParams::new(mu, sigma)?);
            }
            Ok(PatternMixture::Blocked {
                always_observed: head,
                by_subpattern,
            })
        }
    }
}

/// Coordinatewise invertible feature map applied after sampling the latent
/// Gaussian.
pub trait FeatureTransform: Send + Sync {
    fn forward(&self, j: usize, x: f64) -> f64;
    fn inverse(&self, j: usize, z: f64) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityTransform;

impl FeatureTransform for IdentityTransform {
    fn forward(&self, _j: usize, x: f64) -> f64 {
        x
    }

    fn inverse(&self, _j: usize, z: f64) -> Result<f64> {
        Ok(z)
    }
}

/// Exponential, cubic and non-monotonic maps on features 3, 4 and 5
/// (indices 2, 3, 4); identity elsewhere.
#[derive(Clone, Copy, Debug, Default)]
pub struct NonlinearTransform;

impl FeatureTransform for NonlinearTransform {
    fn forward(&self, j: usize, x: f64) -> f64 {
        match j {
            2 => x.exp() + NONLINEAR_C3,
            3 => x * x * x,
            4 => {
                if x >= 0.0 {
                    NONLINEAR_C5 + x * x
                } else {
                    NONLINEAR_C5 - 10.0 * x.exp()
                }
            }
            _ => x,
        }
    }

    fn inverse(&self, j: usize, z: f64) -> Result<f64> {
        match j {
            2 => {
                let shifted = z - NONLINEAR_C3;
                if shifted > 0.0 {
                    Ok(shifted.ln())
                } else {
                    Err(Error::Domain { feature: j, value: z })
                }
            }
            3 => Ok(z.cbrt()),
            4 => {
                let shifted = z - NONLINEAR_C5;
                if shifted >= 0.0 {
                    Ok(shifted.sqrt())
                } else if shifted > -10.0 {
                    Ok((-shifted / 10.0).ln())
                } else {
                    Err(Error::Domain { feature: j, value: z })
                }
            }
            _ => Ok(z),
        }
    }
}

pub fn nonlinear_transform(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = NonlinearTransform;
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| t.forward(j, x[(i, j)]))
}

pub fn nonlinear_inverse(z: &[f64]) -> Result<Vec<f64>> {
    let t = NonlinearTransform;
    z.iter().enumerate().map(|(j, &v)| t.inverse(j, v)).collect()
}

/// One simulated sample.
#[derive(Clone, Debug)]
pub struct Dataset {
    /// Latent complete covariates.
    pub x_complete: DMatrix<f64>,
    /// Model inputs with NaN in missing cells; `mask` is authoritative.
    pub z_observed: DMatrix<f64>,
    pub mask: Mask,
    pub y: Vec<u8>,
    pub scenario: ScenarioConfig,
    pub bayes_probs: Option<Vec<f64>>,
}

impl Dataset {
    /// Build a dataset from explicit pieces; missing cells of `z` are
    /// overwritten with NaN.
    pub fn from_parts(
        x_complete: DMatrix<f64>,
        z_full: DMatrix<f64>,
        mask: Mask,
        y: Vec<u8>,
        scenario: ScenarioConfig,
    ) -> Result<Self> {
        let (n, d) = z_full.shape();
        if x_complete.shape() != (n, d) || mask.nrows() != n || mask.ncols() != d || y.len() != n {
            return Err(Error::InvalidInput("dataset component shapes disagree".into()));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        let mut z_observed = z_full;
        for i in 0..n {
            for j in 0..d {
                if mask.get(i, j) {
                    z_observed[(i, j)] = f64::NAN;
                }
            }
        }
        Ok(Dataset {
            x_complete,
            z_observed,
            mask,
            y,
            scenario,
            bayes_probs: None,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.z_observed.ncols()
    }

    /// Model inputs with every cell filled, i.e. `g(x)` for the non-linear
    /// scenario and `x` otherwise.
    pub fn z_complete(&self) -> DMatrix<f64> {
        match self.scenario.kind {
            ScenarioKind::Nonlinear => nonlinear_transform(&self.x_complete),
            _ => self.x_complete.clone(),
        }
    }

    pub fn y_f64(&self) -> Vec<f64> {
        self.y.iter().map(|&v| v as f64).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)]);
        Dataset {
            x_complete: pick(&self.x_complete),
            z_observed: pick(&self.z_observed),
            mask: self.mask.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            scenario: self.scenario.clone(),
            bayes_probs: self
                .bayes_probs
                .as_ref()
                .map(|b| rows.iter().map(|&i| b[i]).collect()),
        }
    }
}

/// Generate `n` rows: pattern, then covariates from that pattern's Gaussian,
/// then the optional non-linear map, then a label from `sigma(beta*^T z)`.
pub fn gen_dataset<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    mixture: &PatternMixture,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    config.validate()?;
    let beta = config.beta_star()?.to_vec();
    let d = config.d;
    let mask = gen_mask(&config.mask_probs(), n, rng)?;
    let mut samplers: BTreeMap<Pattern, MvnSampler> = BTreeMap::new();
    let mut x = DMatrix::zeros(n, d);
    let mut buf = vec![0.0; d];
    for i in 0..n {
        let p = mask.pattern(i);
        if !samplers.contains_key(&p) {
            let params = mixture.params_for(&p)?;
            samplers.insert(p.clone(), MvnSampler::new(params.mu().clone(), params.sigma())?);
        }
        samplers[&p].draw_into(rng, &mut buf);
        for j in 0..d {
            x[(i, j)] = buf[j];
        }
    }
    let z = match config.kind {
        ScenarioKind::Nonlinear => nonlinear_transform(&x),
        _ => x.clone(),
    };
    let y = (0..n)
        .map(|i| {
            let eta: f64 = (0..d).map(|j| beta[j] * z[(i, j)]).sum();
            (rng.random::<f64>() < sigmoid(eta)) as u8
        })
        .collect();
    Dataset::from_parts(x, z, mask, y, config.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn mcar_mask_rates() {
        let n = 100_000;
        let m = gen_mask(&[0.25; 5], n, &mut rng(1)).unwrap();
        for j in 0..5 {
            let rate = (0..n).filter(|&i| m.get(i, j)).count() as f64 / n as f64;
            assert!((0.24..=0.26).contains(&rate), "column {j}: {rate}");
        }
        assert!((0..n).all(|i| !m.row(i).iter().all(|&b| b)));
    }

    #[test]
    fn zero_probs_give_empty_mask() {
        let m = gen_mask(&[0.0; 4], 1000, &mut rng(2)).unwrap();
        assert!(!m.any_missing());
    }

    #[test]
    fn mask_rejects_certain_missingness() {
        assert!(gen_mask(&[1.0, 1.0], 10, &mut rng(3)).is_err());
        assert!(gen_mask(&[0.5, 1.2], 10, &mut rng(3)).is_err());
    }

    #[test]
    fn two_feature_patterns_renormalize() {
        // Admissible patterns 00, 10, 01 each have mass 1/4 before
        // renormalization; dividing by 3/4 gives 1/3.
        let n = 100_000;
        let m = gen_mask(&[0.5, 0.5], n, &mut rng(4)).unwrap();
        let groups = m.group_by_pattern();
        assert_eq!(groups.len(), 3);
        for rows in groups.values() {
            let f = rows.len() as f64 / n as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.02, "{f}");
        }
    }

    #[test]
    fn mcar_mixture_is_shared_toeplitz() {
        let cfg = ScenarioConfig::new(ScenarioKind::Mcar, 0);
        let mix = gen_mixture(&cfg, &mut rng(5)).unwrap();
        let a = mix.params_for(&Pattern::parse("10000").unwrap()).unwrap();
        let b = mix.params_for(&Pattern::parse("00011").unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sigma()[(0, 1)], 0.65);
        assert!(a.mu().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mnar_mixture_covers_patterns() {
        let cfg = ScenarioConfig::new(ScenarioKind::Mnar, 0);
        let mix = gen_mixture(&cfg, &mut rng(6)).unwrap();
        assert_eq!(mix.n_components(), 31);
        for p in Pattern::admissible(5) {
            let params = mix.params_for(&p).unwrap();
            let s = params.sigma();
            let scale = s[(0, 0)];
            assert!(scale > 0.0 && scale < 1.0);
            // Toeplitz structure scale * rho^|i-j|
            let rho = s[(0, 1)] / scale;
            assert!(rho.abs() < 1.0);
            assert_abs_diff_eq!(s[(1, 3)], scale * rho * rho, epsilon = 1e-12);
        }
        assert!(mix.params_for(&Pattern::parse("11111").unwrap()).is_err());
    }

    #[test]
    fn mnar_zero_correlation_draw_is_scaled_identity() {
        let s = toeplitz_cov(0.0, 5, 0.4).unwrap();
        assert_eq!(s, DMatrix::identity(5, 5) * 0.4);
    }

    #[test]
    fn mar_mixture_is_block_diagonal() {
        let cfg = ScenarioConfig::new(ScenarioKind::Mar, 0);
        let mix = gen_mixture(&cfg, &mut rng(7)).unwrap();
        assert_eq!(mix.n_components(), 8);
        for code in 0..(1 << 3) {
            let mut bits = vec![false, false];
            bits.extend((0..3).map(|j| code >> j & 1 == 1));
            let params = mix.params_for(&Pattern::new(bits)).unwrap();
            for i in 2..5 {
                for j in 0..2 {
                    assert_eq!(params.sigma()[(i, j)], 0.0);
                    assert_eq!(params.sigma()[(j, i)], 0.0);
                }
                assert_eq!(params.mu()[i], 0.0);
            }
            assert_eq!(params.sigma()[(2, 3)], 0.65);
        }
        assert!(mix.params_for(&Pattern::parse("10000").unwrap()).is_err());
    }

    #[test]
    fn transform_constants() {
        let z = nonlinear_transform(&DMatrix::zeros(1, 5));
        let row: Vec<f64> = z.row(0).iter().copied().collect();
        assert_abs_diff_eq!(row[2], -0.67, epsilon = 1e-15);
        // X5 = 0 takes the quadratic branch; the left limit is c5 - 10.
        assert_eq!(row[4], NONLINEAR_C5);
        assert_abs_diff_eq!(NonlinearTransform.forward(4, -1e-300), -8.0, epsilon = 1e-12);
        assert_eq!([row[0], row[1], row[3]], [0.0, 0.0, 0.0]);
        let t = NonlinearTransform;
        assert_eq!(t.forward(4, 1.0), 3.0);
        assert_abs_diff_eq!(t.forward(4, -1.0), -1.6788, epsilon = 1e-4);
        assert_abs_diff_eq!(t.forward(4, -1.0), 2.0 - 10.0 / std::f64::consts::E, epsilon = 1e-15);
    }

    #[test]
    fn transform_inverse_round_trip() {
        let mut r = rng(8);
        let t = NonlinearTransform;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..5).map(|_| r.sample(StandardNormal)).collect();
            let z: Vec<f64> = x.iter().enumerate().map(|(j, &v)| t.forward(j, v)).collect();
            let back = nonlinear_inverse(&z).unwrap();
            for j in 0..5 {
                assert_abs_diff_eq!(back[j], x[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn transform_inverse_domain_errors() {
        let t = NonlinearTransform;
        assert!(t.inverse(2, NONLINEAR_C3).is_err());
        assert!(t.inverse(2, -5.0).is_err());
        assert!(t.inverse(4, NONLINEAR_C5 - 10.0).is_err());
        assert!(t.inverse(4, NONLINEAR_C5 - 9.99).is_ok());
    }

    #[test]
    fn zero_beta_gives_balanced_labels() {
        let mut cfg = ScenarioConfig::new(ScenarioKind::Mcar, 0);
        cfg.beta_star = Some(vec![0.0; 5]);
        let mix = gen_mixture(&cfg, &mut rng(9)).unwrap();
        let ds = gen_dataset(&cfg, &mix, 50_000, &mut rng(10)).unwrap();
        let rate = ds.y.iter().map(|&v| v as f64).sum::<f64>() / 50_000.0;
        assert!((0.48..=0.52).contains(&rate), "{rate}");
    }

    #[test]
    fn mcar_dataset_covariance() {
        let cfg = ScenarioConfig::new(ScenarioKind::Mcar, 11).with_beta_star();
        let mix = gen_mixture(&cfg, &mut rng(11)).unwrap();
        let n = 100_000;
        let ds = gen_dataset(&cfg, &mix, n, &mut rng(12)).unwrap();
        let x = &ds.x_complete;
        let m0 = x.column(0).mean();
        let m1 = x.column(1).mean();
        let cov: f64 = (0..n).map(|i| (x[(i, 0)] - m0) * (x[(i, 1)] - m1)).sum::<f64>() / (n - 1) as f64;
        assert!((cov - 0.65).abs() < 0.02, "{cov}");
        for i in 0..n {
            for j in 0..5 {
                assert_eq!(ds.z_observed[(i, j)].is_nan(), ds.mask.get(i, j));
                if !ds.mask.get(i, j) {
                    assert_eq!(ds.z_observed[(i, j)], x[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn nonlinear_columns_are_centred() {
        let cfg = ScenarioConfig::new(ScenarioKind::Nonlinear, 13).with_beta_star();
        let mix = gen_mixture(&cfg, &mut rng(13)).unwrap();
        let n = 100_000;
        let ds = gen_dataset(&cfg, &mix, n, &mut rng(14)).unwrap();
        let z = ds.z_complete();
        for j in 0..4 {
            let mean = z.column(j).mean();
            assert!(mean.abs() < 0.1, "column {j}: {mean}");
        }
        // E[Z5] = c5 + E[X^2; X >= 0] - 10 E[e^X; X < 0] = 2.5 - 10 e^{1/2} Phi(-1)
        let exact = 2.5 - 10.0 * 0.5f64.exp() * crate::gaussian::std_normal_cdf(-1.0);
        assert_abs_diff_eq!(exact, -0.1158, epsilon = 1e-4);
        let col = z.column(4);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * sd / (n as f64).sqrt(), "{mean} vs {exact}");
    }

    #[test]
    fn beta_star_is_reproducible() {
        let a = ScenarioConfig::new(ScenarioKind::Mcar, 3).with_beta_star();
        let b = ScenarioConfig::new(ScenarioKind::Mcar, 3).with_beta_star();
        assert_eq!(a.beta_star, b.beta_star);
        let mut fixed = ScenarioConfig::new(ScenarioKind::Mcar, 3);
        fixed.beta_star = Some(vec![1.0; 5]);
        assert_eq!(fixed.with_beta_star().beta_star, Some(vec![1.0; 5]));
    }

    #[test]
    fn config_validation() {
        let mut c = ScenarioConfig::new(ScenarioKind::Mcar, 0);
        c.miss_prob = 1.0;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::new(ScenarioKind::Mcar, 0);
        c.beta_star = Some(vec![1.0; 3]);
        assert!(c.validate().is_err());
        let json = r#"{"kind": "MCAR", "seed": 1, "bogus": 2}"#;
        assert!(serde_json::from_str::<ScenarioConfig>(json).is_err());
    }
}
