//! Simulated benchmark data: Gaussian-copula covariates, a nonlinear
//! prognostic function, a quadratic CATE in the first covariate and a
//! logistic treatment assignment.
//!
//! ```text
//! μ(x) = 6 + 0.3·exp(x₁) + x₂² + 1.5·|x₃| + 0.8·x₄
//! τ(x) = 3 + 0.8·x₁²
//! π(x) = Λ(−1.5 + 0.5·x₁ + ν/10),  ν ~ U(0, 1)
//! A ~ Bernoulli(π),  Y = μ + τ·A + ε,  ε ~ N(0, σ²)
//! ```

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind, Truth};
use crate::error::{Error, Result};
use crate::normal::{logistic, normal_cdf, normal_quantile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub p: usize,
    /// The first `n_continuous` covariates are continuous, the rest binary.
    pub n_continuous: usize,
    /// Noise variance σ².
    pub noise_var: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n: 2000,
            p: 10,
            n_continuous: 5,
            noise_var: 0.5,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.p < 4 {
            return Err(Error::Config(format!(
                "the outcome model uses four covariates, p must be at least 4 (got {})",
                self.p
            )));
        }
        if self.n_continuous > self.p {
            return Err(Error::Config(format!(
                "n_continuous ({}) exceeds p ({})",
                self.n_continuous, self.p
            )));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::Config(format!(
                "noise variance must be positive, got {}",
                self.noise_var
            )));
        }
        Ok(())
    }
}

/// Latent Gaussian correlation of the copula and its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaSpec {
    pub theta: Array2<f64>,
    /// Lower-triangular `L` with `L Lᵀ = Θ`.
    pub cholesky: Array2<f64>,
}

/// `Θ_jk = 0.1^|j−k| + 0.1·𝕀(j ≠ k)`.
pub fn build_theta(p: usize) -> Result<CopulaSpec> {
    if p == 0 {
        return Err(Error::Config("p must be at least 1".into()));
    }
    let theta = Array2::from_shape_fn((p, p), |(j, k)| {
        let off = if j == k { 0.0 } else { 0.1 };
        0.1_f64.powi((j as i32 - k as i32).abs()) + off
    });
    let cholesky = cholesky(theta.view())?;
    Ok(CopulaSpec { theta, cholesky })
}

/// Unpivoted Cholesky factorization of a symmetric positive definite matrix.
pub fn cholesky(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let p = m.nrows();
    if m.ncols() != p {
        return Err(Error::Shape("cholesky needs a square matrix".into()));
    }
    let mut l = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
            if i == j {
                let d = m[[i, i]] - dot;
                if !(d > 0.0) {
                    return Err(Error::Config(format!(
                        "matrix is not positive definite (pivot {i} = {d})"
                    )));
                }
                l[[i, i]] = d.sqrt();
            } else {
                l[[i, j]] = (m[[i, j]] - dot) / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// `n` draws from the Gaussian copula: `Z ~ N(0, Θ)`, `U = Φ(Z)`.
pub fn copula_sample<R: Rng + ?Sized>(spec: &CopulaSpec, n: usize, rng: &mut R) -> Array2<f64> {
    let p = spec.theta.nrows();
    let mut u = Array2::zeros((n, p));
    let mut z = vec![0.0; p];
    // Φ(z) rounds to 1 beyond z ≈ 8.3; keep U strictly inside (0, 1).
    let upper = 1.0 - f64::EPSILON / 2.0;
    for mut row in u.rows_mut() {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for j in 0..p {
            let corr: f64 = (0..=j).map(|k| spec.cholesky[[j, k]] * z[k]).sum();
            row[j] = normal_cdf(corr).clamp(f64::MIN_POSITIVE, upper);
        }
    }
    u
}

/// Maps copula uniforms to covariates: the first `n_continuous` columns get
/// standard normal marginals `Φ⁻¹(U)`, the rest are `𝕀(U > 0.5)`.
pub fn make_covariates(u: ArrayView2<f64>, n_continuous: usize) -> Result<Array2<f64>> {
    if n_continuous > u.ncols() {
        return Err(Error::Config(format!(
            "{n_continuous} continuous columns requested from {} uniforms",
            u.ncols()
        )));
    }
    let mut x = Array2::zeros(u.raw_dim());
    for ((i, j), &v) in u.indexed_iter() {
        x[[i, j]] = if j < n_continuous {
            normal_quantile(v)?
        } else if v > 0.5 {
            1.0
        } else {
            0.0
        };
    }
    Ok(x)
}

/// Prognostic function μ(x).
pub fn prognostic(x: ArrayView1<f64>) -> f64 {
    6.0 + 0.3 * x[0].exp() + x[1] * x[1] + 1.5 * x[2].abs() + 0.8 * x[3]
}

/// CATE τ(x).
pub fn cate(x: ArrayView1<f64>) -> f64 {
    3.0 + 0.8 * x[0] * x[0]
}

/// Propensity π(x, ν).
pub fn propensity(x: ArrayView1<f64>, nu: f64) -> f64 {
    logistic(-1.5 + 0.5 * x[0] + nu / 10.0)
}

/// Draws a dataset with ground truth attached. Same config, same bits.
pub fn simulate(config: &DgpConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let spec = build_theta(config.p)?;
    let u = copula_sample(&spec, config.n, &mut rng);
    let x = make_covariates(u.view(), config.n_continuous)?;

    let noise = Normal::new(0.0, config.noise_var.sqrt()).expect("validated variance");
    let n = config.n;
    let (mut mu, mut tau, mut pi) = (Array1::zeros(n), Array1::zeros(n), Array1::zeros(n));
    let (mut a, mut y) = (Array1::zeros(n), Array1::zeros(n));
    for (i, row) in x.rows().into_iter().enumerate() {
        let nu: f64 = rng.random();
        mu[i] = prognostic(row);
        tau[i] = cate(row);
        pi[i] = propensity(row, nu);
        a[i] = if rng.random::<f64>() < pi[i] { 1.0 } else { 0.0 };
        y[i] = mu[i] + tau[i] * a[i] + noise.sample(&mut rng);
    }

    let kinds = (0..config.p)
        .map(|j| {
            if j < config.n_continuous {
                FeatureKind::Continuous
            } else {
                FeatureKind::Binary
            }
        })
        .collect();
    Dataset::with_kinds(x, a, y, kinds)?.with_truth(Truth { mu, tau, pi })
}
