//! Gibbs sampler over `(x, σ², β, γ²)`.
//!
//! Each iteration draws, in order,
//!
//! ```text
//! x  | y, σ², γ²  ~ N₊(μ, Σ),  Σ = (HᵀH/σ² + Δ⁻¹/γ²)⁻¹,  μ = Σ Hᵀy / σ²
//! σ² | y, x, β   ~ IG(α + N/2, β + ‖y − Hx‖²/2)
//! β  | σ²        ~ Gamma(α + α_o, σ² β_o / (σ² + β_o))      (shape, scale)
//! γ² | x         ~ IG(η + N/2, ν + xᵀΔ⁻¹x/2)
//! ```
//!
//! and the MMSE estimate is the average of the post-burn-in draws.

mod hmc;
mod truncnorm;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

pub use hmc::HmcTrace;
pub use truncnorm::{positive_truncated_mean, sample_lower_truncated};

use crate::error::{Error, Result};
use crate::estimate::{data_driven_init, EstimateResult, Solver};
use crate::linalg::{dense_matvec, DenseMatrix, SpdFactor};
use crate::model::posterior::{ln_gamma_density, ln_inv_gamma};
use crate::model::{DeconvProblem, Hyperparams, IntensityField, PosteriorPoint, SpatialCovariance};

/// How the truncated-Gaussian `x` step is performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XSampler {
    /// One systematic sweep of univariate truncated-normal updates.
    #[default]
    CoordinateGibbs,
    /// One exact-HMC trajectory. Refactorizes the precision every iteration,
    /// so it costs O(N³) per draw.
    ExactHmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub n_mc: usize,
    pub n_bi: usize,
    pub rng_seed: u64,
    pub x_sampler: XSampler,
    pub init: Option<PosteriorPoint>,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig { n_mc: 1500, n_bi: 500, rng_seed: 0, x_sampler: XSampler::default(), init: None }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bi >= self.n_mc {
            return Err(Error::param(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.n_bi, self.n_mc
            )));
        }
        if let Some(init) = &self.init {
            if !(init.sigma2 > 0.0 && init.gamma2 > 0.0 && init.beta > 0.0) {
                return Err(Error::param("initial scalars must be positive"));
            }
            if !init.x.is_nonnegative() {
                return Err(Error::param("initial x must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// Retained (post-burn-in) draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub x_samples: Vec<Vec<f64>>,
    pub sigma2_samples: Vec<f64>,
    pub beta_samples: Vec<f64>,
    pub gamma2_samples: Vec<f64>,
    /// Total wall contacts of the exact-HMC backend (0 for coordinate Gibbs).
    pub hmc_bounces: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.sigma2_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2_samples.is_empty()
    }

    pub fn x_mean(&self) -> Vec<f64> {
        let n = self.x_samples.first().map_or(0, Vec::len);
        let mut m = vec![0.0; n];
        for s in &self.x_samples {
            for (a, b) in m.iter_mut().zip(s) {
                *a += b;
            }
        }
        let k = self.x_samples.len().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= k);
        m
    }

    /// Trace of one core's intensity.
    pub fn x_trace(&self, core: usize) -> Vec<f64> {
        self.x_samples.iter().map(|s| s[core]).collect()
    }
}

/// Effective sample size by Geyer's initial positive sequence.
pub fn effective_sample_size(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 4 {
        return n as f64;
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let var = trace.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| {
        (0..n - lag).map(|t| (trace[t] - mean) * (trace[t + lag] - mean)).sum::<f64>()
            / (n as f64 * var)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0)).min(n as f64)
}

/// `IG(shape, scale)` with density `∝ v^{-shape-1} e^{-scale/v}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaParams {
    pub shape: f64,
    pub scale: f64,
}

impl InvGammaParams {
    pub fn ln_pdf(&self, v: f64) -> f64 {
        ln_inv_gamma(v, self.shape, self.scale)
    }

    pub fn mean(&self) -> f64 {
        self.scale / (self.shape - 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(self.shape, 1.0 / self.scale).expect("valid IG parameters");
        1.0 / g.sample(rng)
    }
}

/// `Gamma(shape, scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

impl GammaParams {
    pub fn ln_pdf(&self, v: f64) -> f64 {
        ln_gamma_density(v, self.shape, self.scale)
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, self.scale).expect("valid Gamma parameters").sample(rng)
    }
}

pub fn sigma2_conditional(
    problem: &DeconvProblem,
    x: &[f64],
    hyper: &Hyperparams,
    beta: f64,
) -> InvGammaParams {
    let n = problem.len() as f64;
    InvGammaParams { shape: hyper.alpha + 0.5 * n, scale: beta + 0.5 * problem.residual_sq(x) }
}

pub fn beta_conditional(sigma2: f64, hyper: &Hyperparams) -> GammaParams {
    GammaParams {
        shape: hyper.alpha + hyper.alpha_o,
        scale: sigma2 * hyper.beta_o / (sigma2 + hyper.beta_o),
    }
}

pub fn gamma2_conditional(x: &[f64], cov: &SpatialCovariance, hyper: &Hyperparams) -> InvGammaParams {
    let n = x.len() as f64;
    InvGammaParams { shape: hyper.eta + 0.5 * n, scale: hyper.nu + 0.5 * cov.quad_form_inv(x) }
}

pub fn sample_sigma2<R: Rng + ?Sized>(
    problem: &DeconvProblem,
    x: &[f64],
    hyper: &Hyperparams,
    beta: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::param("beta must be > 0"));
    }
    Ok(sigma2_conditional(problem, x, hyper, beta).sample(rng))
}

pub fn sample_beta<R: Rng + ?Sized>(sigma2: f64, hyper: &Hyperparams, rng: &mut R) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::param("sigma2 must be > 0"));
    }
    Ok(beta_conditional(sigma2, hyper).sample(rng))
}

pub fn sample_gamma2<R: Rng + ?Sized>(
    x: &[f64],
    cov: &SpatialCovariance,
    hyper: &Hyperparams,
    rng: &mut R,
) -> f64 {
    gamma2_conditional(x, cov, hyper).sample(rng)
}

/// Moments of the untruncated Gaussian behind the `x` conditional.
#[derive(Debug, Clone)]
pub struct XConditional {
    pub precision: DenseMatrix<f64>,
    pub mean: Vec<f64>,
    pub factor: SpdFactor,
}

pub fn x_conditional(problem: &DeconvProblem, sigma2: f64, gamma2: f64) -> Result<XConditional> {
    let precision = precision_matrix(problem, sigma2, gamma2);
    let factor = SpdFactor::new(precision.as_ref()).map_err(|_| {
        Error::numerical("x-conditional precision not PD; increase covariance jitter")
    })?;
    let rhs: Vec<f64> = problem.hty().iter().map(|v| v / sigma2).collect();
    let mean = factor.solve(&rhs);
    Ok(XConditional { precision, mean, factor })
}

pub(crate) fn precision_matrix(problem: &DeconvProblem, sigma2: f64, gamma2: f64) -> DenseMatrix<f64> {
    let a = problem.gram();
    let b = problem.covariance().inverse();
    DenseMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] / sigma2 + b[(i, j)] / gamma2)
}

/// One `x` update leaving `N₊(μ, Σ)` invariant.
pub fn sample_x_conditional<R: Rng + ?Sized>(
    problem: &DeconvProblem,
    sigma2: f64,
    gamma2: f64,
    x_current: &IntensityField,
    sampler: XSampler,
    rng: &mut R,
) -> Result<(IntensityField, HmcTrace)> {
    if !(sigma2 > 0.0 && gamma2 > 0.0) {
        return Err(Error::param("sigma2 and gamma2 must be > 0"));
    }
    Error::check_len(problem.len(), x_current.len())?;
    if !x_current.is_nonnegative() {
        return Err(Error::param("current x must be nonnegative"));
    }
    let mut x = x_current.clone();
    match sampler {
        XSampler::CoordinateGibbs => {
            coordinate_sweep(problem, sigma2, gamma2, &mut x, rng);
            Ok((x, HmcTrace::default()))
        }
        XSampler::ExactHmc => {
            let cond = x_conditional(problem, sigma2, gamma2)?;
            let trace = hmc::exact_hmc_step(&mut x, &cond.mean, &cond.factor, rng)?;
            Ok((x, trace))
        }
    }
}

/// Systematic-scan Gibbs over coordinates. `HᵀH x` and `Δ⁻¹ x` are kept up
/// to date incrementally, so a sweep costs O(N²).
fn coordinate_sweep<R: Rng + ?Sized>(
    problem: &DeconvProblem,
    sigma2: f64,
    gamma2: f64,
    x: &mut [f64],
    rng: &mut R,
) {
    let a = problem.gram();
    let b = problem.covariance().inverse();
    let hty = problem.hty();
    let mut ax = dense_matvec(a, x);
    let mut bx = dense_matvec(b, x);
    let (is2, ig2) = (1.0 / sigma2, 1.0 / gamma2);
    for i in 0..x.len() {
        let pii = a[(i, i)] * is2 + b[(i, i)] * ig2;
        let px = ax[i] * is2 + bx[i] * ig2;
        let mean = (hty[i] * is2 - px + pii * x[i]) / pii;
        let draw = sample_lower_truncated(mean, pii.sqrt().recip(), 0.0, rng);
        let delta = draw - x[i];
        if delta != 0.0 {
            for (v, c) in ax.iter_mut().zip(a.col_as_slice(i)) {
                *v += delta * c;
            }
            for (v, c) in bx.iter_mut().zip(b.col_as_slice(i)) {
                *v += delta * c;
            }
            x[i] = draw;
        }
    }
}

/// Runs the sampler and returns the MMSE estimates with the retained chain.
pub fn run_gibbs(
    problem: &DeconvProblem,
    hyper: &Hyperparams,
    config: &GibbsConfig,
) -> Result<(EstimateResult, Chain)> {
    config.validate()?;
    hyper.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let init = match &config.init {
        Some(p) => {
            Error::check_len(problem.len(), p.x.len())?;
            p.clone()
        }
        None => data_driven_init(problem, hyper),
    };
    let PosteriorPoint { mut x, mut sigma2, mut gamma2, mut beta } = init;
    let keep = config.n_mc - config.n_bi;
    let mut chain = Chain {
        x_samples: Vec::with_capacity(keep),
        sigma2_samples: Vec::with_capacity(keep),
        beta_samples: Vec::with_capacity(keep),
        gamma2_samples: Vec::with_capacity(keep),
        hmc_bounces: 0,
    };
    for k in 0..config.n_mc {
        let (nx, trace) =
            sample_x_conditional(problem, sigma2, gamma2, &x, config.x_sampler, &mut rng)?;
        x = nx;
        chain.hmc_bounces += trace.bounces;
        sigma2 = sample_sigma2(problem, &x, hyper, beta, &mut rng)?;
        beta = sample_beta(sigma2, hyper, &mut rng)?;
        gamma2 = sample_gamma2(&x, problem.covariance(), hyper, &mut rng);
        if !(sigma2.is_finite() && gamma2.is_finite() && beta.is_finite()) {
            return Err(Error::numerical(format!("non-finite scalar draw at iteration {k}")));
        }
        if k >= config.n_bi {
            chain.x_samples.push(x.to_vec());
            chain.sigma2_samples.push(sigma2);
            chain.beta_samples.push(beta);
            chain.gamma2_samples.push(gamma2);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let result = EstimateResult {
        solver: Solver::Mcmc,
        x: IntensityField::new(chain.x_mean()),
        sigma2: Some(mean(&chain.sigma2_samples)),
        gamma2: Some(mean(&chain.gamma2_samples)),
        beta: Some(mean(&chain.beta_samples)),
        lambda: None,
        iterations: config.n_mc,
        converged: true,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((result, chain))
}
