use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{CouplingKernel, IntensityField, SpatialCovariance};
use crate::error::{Error, Result};
use crate::linalg::{sq_dist, DenseMatrix};

/// Fixed hyperparameters of the hierarchical model.
///
/// * `σ² ~ IG(alpha, β)`
/// * `β ~ Gamma(alpha_o, beta_o)` (shape, scale)
/// * `γ² ~ IG(eta, nu)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: f64,
    pub alpha_o: f64,
    pub beta_o: f64,
    pub eta: f64,
    pub nu: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { alpha: 10.0, alpha_o: 10.0, beta_o: 0.1, eta: 1e-3, nu: 1e-3 }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.alpha_o, self.beta_o, self.eta, self.nu];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::param("all hyperparameters must be strictly positive"))
        }
    }
}

/// One point `(x, σ², γ², β)` of the joint parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorPoint {
    pub x: IntensityField,
    pub sigma2: f64,
    pub gamma2: f64,
    pub beta: f64,
}

/// Observation `y` together with the operators every solver needs.
///
/// `HᵀH` and `Hᵀy` are computed once here.
#[derive(Debug, Clone)]
pub struct DeconvProblem {
    y: IntensityField,
    kernel: CouplingKernel,
    covariance: SpatialCovariance,
    gram: DenseMatrix<f64>,
    hty: Vec<f64>,
}

impl DeconvProblem {
    pub fn new(
        y: IntensityField,
        kernel: CouplingKernel,
        covariance: SpatialCovariance,
    ) -> Result<Self> {
        Error::check_len(kernel.len(), y.len())?;
        Error::check_len(kernel.len(), covariance.len())?;
        if !y.is_finite() {
            return Err(Error::param("observations must be finite"));
        }
        let gram = kernel.gram();
        let hty = kernel.apply_transpose(&y);
        Ok(DeconvProblem { y, kernel, covariance, gram, hty })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &IntensityField {
        &self.y
    }

    pub fn kernel(&self) -> &CouplingKernel {
        &self.kernel
    }

    pub fn covariance(&self) -> &SpatialCovariance {
        &self.covariance
    }

    /// `HᵀH`.
    pub fn gram(&self) -> &DenseMatrix<f64> {
        &self.gram
    }

    /// `Hᵀy`.
    pub fn hty(&self) -> &[f64] {
        &self.hty
    }

    /// `‖y − Hx‖²`.
    pub fn residual_sq(&self, x: &[f64]) -> f64 {
        sq_dist(&self.y, &self.kernel.apply(x))
    }
}

pub fn log_likelihood(
    y: &IntensityField,
    x: &IntensityField,
    sigma2: f64,
    h: &CouplingKernel,
) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::param(format!("sigma2 must be > 0, got {sigma2}")));
    }
    Error::check_len(h.len(), y.len())?;
    Error::check_len(h.len(), x.len())?;
    let n = y.len() as f64;
    let r = sq_dist(y, &h.apply(x));
    Ok(-0.5 * n * (2.0 * PI * sigma2).ln() - r / (2.0 * sigma2))
}

/// `log IG(v; shape, scale)`.
pub(crate) fn ln_inv_gamma(v: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * v.ln() - scale / v
}

/// `log Gamma(v; shape, scale)`.
pub(crate) fn ln_gamma_density(v: f64, shape: f64, scale: f64) -> f64 {
    (shape - 1.0) * v.ln() - v / scale - ln_gamma(shape) - shape * scale.ln()
}

/// Unnormalized joint log-posterior of `(x, σ², γ², β)`.
///
/// All constants depending only on `(y, H, Δ, hyper)` are kept except the
/// orthant probability of the truncated prior, which depends on `Δ` alone.
/// Returns `-∞` outside the support `x ≥ 0`.
pub fn log_posterior(
    point: &PosteriorPoint,
    problem: &DeconvProblem,
    hyper: &Hyperparams,
) -> Result<f64> {
    hyper.validate()?;
    let PosteriorPoint { x, sigma2, gamma2, beta } = point;
    let (sigma2, gamma2, beta) = (*sigma2, *gamma2, *beta);
    if !(sigma2 > 0.0 && gamma2 > 0.0 && beta > 0.0) {
        return Err(Error::param("sigma2, gamma2 and beta must be > 0"));
    }
    Error::check_len(problem.len(), x.len())?;
    if x.iter().any(|&v| v < 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let n = x.len() as f64;
    let cov = problem.covariance();
    let ll = log_likelihood(problem.y(), x, sigma2, problem.kernel())?;
    let lx = -0.5 * n * (2.0 * PI * gamma2).ln()
        - 0.5 * cov.log_det()
        - cov.quad_form_inv(x) / (2.0 * gamma2);
    let ls = ln_inv_gamma(sigma2, hyper.alpha, beta);
    let lb = ln_gamma_density(beta, hyper.alpha_o, hyper.beta_o);
    let lg = ln_inv_gamma(gamma2, hyper.eta, hyper.nu);
    Ok(ll + lx + ls + lb + lg)
}

/// `y_clean + w`, `w ~ N(0, sigma2_n I)`, reproducible from `seed`.
pub fn add_noise(y_clean: &IntensityField, sigma2_n: f64, seed: u64) -> Result<IntensityField> {
    if !(sigma2_n >= 0.0) || !sigma2_n.is_finite() {
        return Err(Error::param(format!("noise variance must be >= 0, got {sigma2_n}")));
    }
    if sigma2_n == 0.0 {
        return Ok(y_clean.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = sigma2_n.sqrt();
    Ok(y_clean
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + sd * z
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CsrMatrix;
    use crate::model::{CovarianceParams, KernelParams};

    #[test]
    fn likelihood_closed_forms() {
        let h = CouplingKernel::identity(1);
        let y = IntensityField::new(vec![3.0]);
        let ll = log_likelihood(&y, &y, 1.0 / (2.0 * PI), &h).unwrap();
        assert!(ll.abs() < 1e-14);

        let h = CouplingKernel::identity(2);
        let y = IntensityField::new(vec![1.0, 1.0]);
        let x = IntensityField::zeros(2);
        let ll = log_likelihood(&y, &x, 1.0, &h).unwrap();
        assert!((ll - (-(2.0 * PI).ln() - 1.0)).abs() < 1e-14);

        assert!(log_likelihood(&y, &x, 0.0, &h).is_err());
        // −(N/2) log σ² dominates as σ² grows.
        let a = log_likelihood(&y, &x, 1e8, &h).unwrap();
        let b = log_likelihood(&y, &x, 1e10, &h).unwrap();
        assert!(((a - b) - (1e10f64 / 1e8).ln()).abs() < 1e-6);
    }

    #[test]
    fn noise_contract() {
        let y = IntensityField::new(vec![1.5, -2.0, 0.0]);
        assert_eq!(add_noise(&y, 0.0, 9).unwrap(), y);
        assert_eq!(add_noise(&y, 2.0, 9).unwrap(), add_noise(&y, 2.0, 9).unwrap());
        assert_ne!(add_noise(&y, 2.0, 9).unwrap(), add_noise(&y, 2.0, 10).unwrap());
        assert!(add_noise(&y, -1.0, 0).is_err());
    }

    #[test]
    fn noise_moments() {
        let n = 100_000;
        let clean = IntensityField::zeros(n);
        let w = add_noise(&clean, 10.0, 4).unwrap();
        assert!(w.mean().abs() < 4.0 * (10.0f64 / n as f64).sqrt());
        assert!((w.variance() - 10.0).abs() < 0.5);
    }

    fn two_core_problem() -> DeconvProblem {
        let m = DenseMatrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.3 });
        let h = CouplingKernel::from_matrix(CsrMatrix::from_dense(&m), KernelParams::default())
            .unwrap();
        let d = DenseMatrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.5 });
        let cov = SpatialCovariance::from_matrix(d, CovarianceParams::new(1.0, 1.0).unwrap()).unwrap();
        DeconvProblem::new(IntensityField::new(vec![2.0, 1.0]), h, cov).unwrap()
    }

    #[test]
    fn support_violation_is_minus_infinity() {
        let p = two_core_problem();
        let pt = PosteriorPoint {
            x: IntensityField::new(vec![1.0, -0.1]),
            sigma2: 1.0,
            gamma2: 1.0,
            beta: 1.0,
        };
        assert_eq!(log_posterior(&pt, &p, &Hyperparams::default()).unwrap(), f64::NEG_INFINITY);
    }
}
