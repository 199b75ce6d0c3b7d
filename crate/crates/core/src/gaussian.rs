//! Multivariate Gaussian primitives.
//!
//! Covariance construction, conditioning of a Gaussian on the observed
//! coordinates of a missingness [`Pattern`], sampling, and the two scalar
//! links used throughout the crate (standard normal CDF and the sigmoid).
//!
//! No explicit matrix inverse is ever formed: conditioning solves triangular
//! systems against the Cholesky factor of the observed block.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Diagonal increments tried, in order, when a Cholesky factorization fails.
pub const CHOLESKY_JITTER: [f64; 3] = [1e-10, 1e-8, 1e-6];

const SYMMETRY_RTOL: f64 = 1e-12;
const PIVOT_FLOOR: f64 = -1e-10;

/// Standard normal CDF, evaluated through `erfc` so both tails keep full
/// relative precision.
pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// Logistic sigmoid in its overflow-free two-branch form.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Missingness indicator of one row: `bits[j]` is true when feature `j` is missing.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern {
    bits: Vec<bool>,
    obs: Vec<usize>,
    mis: Vec<usize>,
}

impl Pattern {
    pub fn new(bits: Vec<bool>) -> Self {
        let obs = (0..bits.len()).filter(|&j| !bits[j]).collect();
        let mis = (0..bits.len()).filter(|&j| bits[j]).collect();
        Pattern { bits, obs, mis }
    }

    /// The fully observed pattern of dimension `d`.
    pub fn complete(d: usize) -> Self {
        Self::new(vec![false; d])
    }

    /// Pattern whose bit `j` is bit `j` of `code` (feature 0 is the lowest bit).
    pub fn from_code(code: usize, d: usize) -> Self {
        Self::new((0..d).map(|j| code >> j & 1 == 1).collect())
    }

    pub fn code(&self) -> usize {
        self.bits
            .iter()
            .enumerate()
            .map(|(j, &b)| (b as usize) << j)
            .sum()
    }

    /// Every pattern of dimension `d` except the all-missing one.
    pub fn admissible(d: usize) -> Vec<Pattern> {
        (0..(1usize << d) - 1).map(|c| Self::from_code(c, d)).collect()
    }

    pub fn dim(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn obs(&self) -> &[usize] {
        &self.obs
    }

    pub fn mis(&self) -> &[usize] {
        &self.mis
    }

    pub fn is_missing(&self, j: usize) -> bool {
        self.bits[j]
    }

    pub fn is_complete(&self) -> bool {
        self.mis.is_empty()
    }

    pub fn is_all_missing(&self) -> bool {
        self.obs.is_empty()
    }

    /// Parse a `0`/`1` string such as `"01001"` (character `j` is feature `j`).
    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidInput(format!(
                    "pattern character {other:?} is not 0 or 1"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(bits))
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern({self})")
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Pattern::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Mean vector and covariance matrix of a multivariate Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
}

impl GaussianParams {
    /// Validates shape, symmetry and positive semi-definiteness.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: sigma.nrows(),
            });
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite Gaussian parameter".into()));
        }
        let scale = sigma.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::InvalidInput(format!(
                        "covariance not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        psd_factor(&sigma)?;
        Ok(GaussianParams { mu, sigma })
    }

    pub fn standard(d: usize) -> Self {
        GaussianParams {
            mu: DVector::zeros(d),
            sigma: DMatrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
}

#[derive(Serialize, Deserialize)]
struct GaussianParamsRepr {
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

impl Serialize for GaussianParams {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GaussianParamsRepr {
            mu: self.mu.iter().copied().collect(),
            sigma: self
                .sigma
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianParams {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = GaussianParamsRepr::deserialize(d)?;
        let dim = repr.mu.len();
        if repr.sigma.len() != dim || repr.sigma.iter().any(|r| r.len() != dim) {
            return Err(serde::de::Error::custom("sigma must be a square d x d array"));
        }
        let sigma = DMatrix::from_fn(dim, dim, |i, j| repr.sigma[i][j]);
        GaussianParams::new(DVector::from_vec(repr.mu), sigma).map_err(serde::de::Error::custom)
    }
}

/// `scale * [rho^|i-j|]`, the stationary AR(1) covariance.
pub fn toeplitz_cov(rho: f64, d: usize, scale: f64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidInput(format!(
            "Toeplitz correlation must satisfy |rho| < 1, got {rho}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidInput(format!("scale must be positive, got {scale}")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| {
        scale * rho.powi(i.abs_diff(j) as i32)
    }))
}

/// Cholesky factorization, retried with the [`CHOLESKY_JITTER`] diagonal
/// increments on failure.
pub fn cholesky_jitter(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Some(c);
    }
    let n = a.nrows();
    CHOLESKY_JITTER.iter().find_map(|&eps| {
        let mut b = a.clone();
        for i in 0..n {
            b[(i, i)] += eps;
        }
        Cholesky::new(b)
    })
}

/// Lower-triangular `L` with `L Lᵀ = a` for positive semi-definite `a`.
///
/// Pivots within rounding of zero produce zero columns, so degenerate
/// covariances sample exactly on their support. Pivots below `-1e-10`
/// (relative to the largest diagonal entry) trigger the jitter retries.
pub fn psd_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(l) = semidefinite_cholesky(a) {
        return Ok(l);
    }
    let n = a.nrows();
    for &eps in &CHOLESKY_JITTER {
        let mut b = a.clone();
        for i in 0..n {
            b[(i, i)] += eps;
        }
        if let Some(l) = semidefinite_cholesky(&b) {
            return Ok(l);
        }
    }
    Err(Error::NotPositiveDefinite {
        context: format!("{n}x{n} covariance"),
    })
}

fn semidefinite_cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(1.0_f64, f64::max);
    let zero_tol = 1e-13 * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot < PIVOT_FLOOR * scale {
            return None;
        }
        if pivot <= zero_tol {
            // Column is (numerically) in the span of the previous ones; the
            // off-diagonal residuals must vanish too.
            for i in j + 1..n {
                let mut r = a[(i, j)];
                for k in 0..j {
                    r -= l[(i, k)] * l[(j, k)];
                }
                if r.abs() > 1e-8 * scale {
                    return None;
                }
            }
            continue;
        }
        let djj = pivot.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut r = a[(i, j)];
            for k in 0..j {
                r -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = r / djj;
        }
    }
    Some(l)
}

fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Law of `X_mis | X_obs = x` for `X ~ N(mu, sigma)`:
/// `N(offset + coef * x, cond_cov)`.
#[derive(Clone, Debug)]
pub struct ConditionalGaussian {
    pub coef: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub cond_cov: DMatrix<f64>,
}

impl ConditionalGaussian {
    /// Conditional mean `offset + coef * x_obs`.
    pub fn mean(&self, x_obs: &[f64]) -> DVector<f64> {
        let mut m = self.offset.clone();
        for i in 0..m.len() {
            for (j, &x) in x_obs.iter().enumerate() {
                m[i] += self.coef[(i, j)] * x;
            }
        }
        m
    }

    pub fn n_mis(&self) -> usize {
        self.offset.len()
    }

    pub fn n_obs(&self) -> usize {
        self.coef.ncols()
    }
}

/// Condition `params` on the observed coordinates of `pattern`.
pub fn condition(params: &GaussianParams, pattern: &Pattern) -> Result<ConditionalGaussian> {
    if pattern.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: pattern.dim(),
        });
    }
    let (obs, mis) = (pattern.obs(), pattern.mis());
    let mu_mis = subvector(&params.mu, mis);
    let s_mm = submatrix(&params.sigma, mis, mis);
    if obs.is_empty() || mis.is_empty() {
        return Ok(ConditionalGaussian {
            coef: DMatrix::zeros(mis.len(), obs.len()),
            offset: mu_mis,
            cond_cov: s_mm,
        });
    }
    let s_oo = submatrix(&params.sigma, obs, obs);
    let s_om = submatrix(&params.sigma, obs, mis);
    let chol = cholesky_jitter(&s_oo).ok_or_else(|| Error::ConditioningFailed {
        pattern: pattern.to_string(),
    })?;
    let l = chol.l();
    // W = L^{-1} S_om, so S_mo S_oo^{-1} S_om = W^T W.
    let w = l
        .solve_lower_triangular(&s_om)
        .ok_or_else(|| Error::ConditioningFailed {
            pattern: pattern.to_string(),
        })?;
    let solved = l
        .tr_solve_lower_triangular(&w)
        .ok_or_else(|| Error::ConditioningFailed {
            pattern: pattern.to_string(),
        })?;
    let coef = solved.transpose();
    let offset = &mu_mis - &coef * subvector(&params.mu, obs);
    let mut cond_cov = s_mm - w.transpose() * &w;
    let k = cond_cov.nrows();
    for i in 0..k {
        for j in 0..i {
            let avg = 0.5 * (cond_cov[(i, j)] + cond_cov[(j, i)]);
            cond_cov[(i, j)] = avg;
            cond_cov[(j, i)] = avg;
        }
    }
    Ok(ConditionalGaussian {
        coef,
        offset,
        cond_cov,
    })
}

/// Draw `n` rows i.i.d. from `N(mu, sigma)`.
pub fn sample_mvn<R: Rng + ?Sized>(
    params: &GaussianParams,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let sampler = MvnSampler::new(params.mu.clone(), &params.sigma)?;
    let d = params.dim();
    let mut out = DMatrix::zeros(n, d);
    let mut buf = vec![0.0; d];
    for i in 0..n {
        sampler.draw_into(rng, &mut buf);
        for j in 0..d {
            out[(i, j)] = buf[j];
        }
    }
    Ok(out)
}

/// Reusable sampler holding the covariance factor.
#[derive(Clone, Debug)]
pub struct MvnSampler {
    mean: Vec<f64>,
    // row-major lower-triangular factor
    factor: Vec<f64>,
    dim: usize,
}

impl MvnSampler {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        let l = psd_factor(cov)?;
        let mut factor = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                factor[i * dim + j] = l[(i, j)];
            }
        }
        Ok(MvnSampler {
            mean: mean.iter().copied().collect(),
            factor,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes `mean + L z` into `out`; consumes exactly `dim` normal draws.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        self.draw_shifted_into(rng, &self.mean, out)
    }

    /// Same as [`draw_into`](Self::draw_into) but centred on `mean` instead
    /// of the stored mean.
    pub fn draw_shifted_into<R: Rng + ?Sized>(&self, rng: &mut R, mean: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut z = [0.0f64; 16];
        let mut zv;
        let z: &mut [f64] = if d <= 16 {
            &mut z[..d]
        } else {
            zv = vec![0.0; d];
            &mut zv
        };
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let row = &self.factor[i * d..i * d + i + 1];
            let mut acc = mean[i];
            for (lij, zj) in row.iter().zip(z.iter()) {
                acc += lij * zj;
            }
            out[i] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toeplitz_reference_entries() {
        let s = toeplitz_cov(0.65, 5, 1.0).unwrap();
        assert_eq!(s[(0, 1)], 0.65);
        assert_abs_diff_eq!(s[(0, 4)], 0.65f64.powi(4), epsilon = 1e-15);
        assert_abs_diff_eq!(s[(0, 4)], 0.1785, epsilon = 1e-4);
        assert_eq!(toeplitz_cov(0.0, 3, 1.0).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn toeplitz_rejects_unit_rho() {
        assert!(toeplitz_cov(1.0, 3, 1.0).is_err());
        assert!(toeplitz_cov(-1.2, 3, 1.0).is_err());
        assert!(toeplitz_cov(0.3, 0, 1.0).is_err());
        assert!(toeplitz_cov(0.3, 3, 0.0).is_err());
    }

    /// Coefficients of det(lambda I - A) by Faddeev-LeVerrier, highest degree first.
    fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        let mut coeffs = vec![1.0];
        let mut m = DMatrix::<f64>::zeros(n, n);
        for k in 1..=n {
            let c_prev = *coeffs.last().unwrap();
            m = a * &m + DMatrix::identity(n, n) * c_prev;
            let am = a * &m;
            coeffs.push(-am.trace() / k as f64);
        }
        coeffs
    }

    #[test]
    fn negative_toeplitz_is_positive_definite() {
        let s = toeplitz_cov(-0.5, 4, 2.0).unwrap();
        assert_eq!(s[(0, 1)], -1.0);
        // Real-rooted characteristic polynomial: all roots positive iff the
        // coefficients strictly alternate in sign.
        let p = char_poly(&s);
        for (k, c) in p.iter().enumerate() {
            let expected_sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!(c * expected_sign > 0.0, "coefficient {k} = {c}");
        }
        assert!(Cholesky::new(s).is_some());
    }

    #[test]
    fn link_functions() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert_eq!(sigmoid(0.0), 0.5);
        assert_abs_diff_eq!(std_normal_cdf(1.959964), 0.975, epsilon = 1e-7);
        for t in [0.1, 1.0, 10.0] {
            assert_abs_diff_eq!(sigmoid(-t), 1.0 - sigmoid(t), epsilon = 1e-15);
        }
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(std_normal_cdf(-40.0) >= 0.0);
        assert_eq!(std_normal_cdf(40.0), 1.0);
    }

    #[test]
    fn cdf_matches_simpson_integration() {
        // Composite Simpson on the density over [-12, t].
        for &t in &[-3.0, -1.0, 0.3, 1.959964, 4.0] {
            let n = 20_000;
            let a = -12.0;
            let h = (t - a) / n as f64;
            let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let mut s = f(a) + f(t);
            for i in 1..n {
                let x = a + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            let quad = s * h / 3.0;
            assert_abs_diff_eq!(std_normal_cdf(t), quad, epsilon = 1e-12);
        }
    }

    #[test]
    fn pattern_index_sets() {
        let p = Pattern::parse("01001").unwrap();
        assert_eq!(p.obs(), &[0, 2, 3]);
        assert_eq!(p.mis(), &[1, 4]);
        assert_eq!(p.to_string(), "01001");
        assert_eq!(Pattern::from_code(p.code(), 5), p);
        assert_eq!(Pattern::admissible(3).len(), 7);
        assert!(Pattern::admissible(3).iter().all(|p| !p.is_all_missing()));
    }

    #[test]
    fn condition_diagonal_is_independent() {
        let mu = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 0.25]));
        let params = GaussianParams::new(mu, sigma).unwrap();
        let p = Pattern::parse("011").unwrap();
        let c = condition(&params, &p).unwrap();
        assert!(c.coef.iter().all(|&v| v == 0.0));
        assert_eq!(c.offset.as_slice(), &[-2.0, 0.5]);
        assert_eq!(c.cond_cov[(0, 0)], 3.0);
        assert_eq!(c.cond_cov[(1, 1)], 0.25);
        assert_eq!(c.cond_cov[(0, 1)], 0.0);
    }

    #[test]
    fn condition_bivariate() {
        let rho = 0.37;
        let params = GaussianParams::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]),
        )
        .unwrap();
        let c = condition(&params, &Pattern::parse("01").unwrap()).unwrap();
        assert_abs_diff_eq!(c.coef[(0, 0)], rho, epsilon = 1e-14);
        assert_abs_diff_eq!(c.offset[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.cond_cov[(0, 0)], 1.0 - rho * rho, epsilon = 1e-14);
        // numerical inverse cross-check
        let inv = params.sigma().clone().try_inverse().unwrap();
        assert_abs_diff_eq!(c.cond_cov[(0, 0)], 1.0 / inv[(1, 1)], epsilon = 1e-13);
    }

    #[test]
    fn condition_fully_observed_is_empty() {
        let params = GaussianParams::standard(3);
        let c = condition(&params, &Pattern::complete(3)).unwrap();
        assert_eq!(c.n_mis(), 0);
        assert_eq!(c.coef.shape(), (0, 3));
        assert_eq!(c.cond_cov.shape(), (0, 0));
    }

    #[test]
    fn condition_singular_observed_block_names_pattern() {
        // Two identical observed coordinates with enormous scale: jitter of
        // 1e-6 cannot rescue a rank-deficient 1e12-scale block.
        let s = DMatrix::from_row_slice(3, 3, &[1e12, 1e12, 0.0, 1e12, 1e12, 0.0, 0.0, 0.0, 1.0]);
        let params = GaussianParams::new(DVector::zeros(3), s).unwrap();
        let err = condition(&params, &Pattern::parse("001").unwrap()).unwrap_err();
        assert!(err.to_string().contains("001"), "{err}");
    }

    #[test]
    fn sample_degenerate_returns_mean() {
        let mu = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let params = GaussianParams::new(mu.clone(), DMatrix::zeros(3, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = sample_mvn(&params, 20, &mut rng).unwrap();
        for i in 0..20 {
            for j in 0..3 {
                assert_eq!(x[(i, j)], mu[j]);
            }
        }
    }

    #[test]
    fn sample_moments_and_determinism() {
        let params = GaussianParams::standard(5);
        let n = 50_000;
        let x = sample_mvn(&params, n, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let y = sample_mvn(&params, n, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(x, y);
        let mean = x.row_mean();
        for j in 0..5 {
            assert!(mean[j].abs() < 0.02, "mean {j} = {}", mean[j]);
        }
        for a in 0..5 {
            for b in 0..5 {
                let c: f64 = (0..n)
                    .map(|i| (x[(i, a)] - mean[a]) * (x[(i, b)] - mean[b]))
                    .sum::<f64>()
                    / (n - 1) as f64;
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((c - target).abs() < 0.05, "cov ({a},{b}) = {c}");
            }
        }
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(GaussianParams::new(DVector::zeros(2), asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianParams::new(DVector::zeros(2), indef).is_err());
    }

    #[test]
    fn params_json_round_trip() {
        let params = GaussianParams::new(
            DVector::from_vec(vec![0.1, -0.3]),
            toeplitz_cov(0.65, 2, 0.7).unwrap(),
        )
        .unwrap();
        let s = serde_json::to_string(&params).unwrap();
        let back: GaussianParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, params);
    }
}
