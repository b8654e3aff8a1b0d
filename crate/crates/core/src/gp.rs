//! Gaussian-process interpolation of core intensities onto arbitrary targets.
//!
//! With prior covariance `Δ′ = Δ/γ²` over the cores and `k` the correlation
//! between a target and every core,
//!
//! ```text
//! mean     = kᵀ Δ⁻¹ x̂
//! variance = (1 − kᵀ Δ⁻¹ k) / γ²
//! ```
//!
//! `Δ⁻¹ x̂` is solved once; variances need one triangular solve per target,
//! done in tiles.

use faer::Mat;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::io::Image;
use crate::linalg::SpdFactor;
use crate::model::{build_covariance, CoreMap, CovarianceParams, SpatialCovariance};

/// Targets evaluated per block.
pub const TILE: usize = 2048;

/// Mean and variance images on the full pixel grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolatedImage {
    pub mean: Image,
    pub variance: Image,
    pub params: CovarianceParams,
    pub gamma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPrediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Factorized GP conditioned on the core intensities.
#[derive(Debug, Clone)]
pub struct GpInterpolator {
    cores: Vec<[f64; 2]>,
    params: CovarianceParams,
    gamma2: f64,
    factor: SpdFactor,
    weights: Vec<f64>,
}

impl GpInterpolator {
    pub fn new(cores: &CoreMap, x_hat: &[f64], gamma2: f64, params: CovarianceParams, jitter: f64) -> Result<Self> {
        let cov = build_covariance(cores, params, jitter)?;
        Self::from_covariance(cores, x_hat, gamma2, &cov)
    }

    /// Reuses an existing prior covariance over the same cores.
    pub fn from_covariance(cores: &CoreMap, x_hat: &[f64], gamma2: f64, cov: &SpatialCovariance) -> Result<Self> {
        if !(gamma2 > 0.0 && gamma2.is_finite()) {
            return Err(Error::param("gamma2 must be > 0"));
        }
        Error::check_len(cores.len(), x_hat.len())?;
        Error::check_len(cores.len(), cov.len())?;
        let factor = cov.factor().clone();
        let weights = factor.solve(x_hat);
        Ok(GpInterpolator { cores: cores.positions().to_vec(), params: cov.params(), gamma2, factor, weights })
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn params(&self) -> CovarianceParams {
        self.params
    }

    pub fn predict_points(&self, targets: &[[f64; 2]]) -> PointPrediction {
        let mut mean = Vec::with_capacity(targets.len());
        let mut variance = Vec::with_capacity(targets.len());
        let prior = 1.0 / self.gamma2;
        let mut clamped = 0.0f64;
        for tile in targets.chunks(TILE) {
            let mut k: Mat<f64> = self.params.cross(&self.cores, tile);
            for j in 0..tile.len() {
                let m: f64 = (0..self.cores.len()).map(|i| k[(i, j)] * self.weights[i]).sum();
                mean.push(m);
            }
            self.factor.solve_lower_in_place(&mut k);
            for j in 0..tile.len() {
                let explained: f64 = (0..self.cores.len()).map(|i| k[(i, j)] * k[(i, j)]).sum();
                let v = prior * (1.0 - explained);
                if v < 0.0 {
                    clamped = clamped.min(v);
                }
                variance.push(v.max(0.0));
            }
        }
        if clamped < -1e-8 * prior {
            log::warn!("clamped predictive variance as low as {clamped:.3e} to 0");
        }
        PointPrediction { mean, variance }
    }

    /// Evaluates every pixel centre of a `width × height` grid.
    pub fn predict_grid(&self, width: usize, height: usize) -> InterpolatedImage {
        let targets: Vec<[f64; 2]> =
            (0..height).flat_map(|r| (0..width).map(move |c| [c as f64, r as f64])).collect();
        let p = self.predict_points(&targets);
        InterpolatedImage {
            mean: Image { width, height, data: p.mean },
            variance: Image { width, height, data: p.variance },
            params: self.params,
            gamma2: self.gamma2,
        }
    }
}

/// Interpolates onto the pixel grid of `cores`.
pub fn gp_interpolate(
    cores: &CoreMap,
    x_hat: &[f64],
    gamma2: f64,
    params: CovarianceParams,
    jitter: f64,
) -> Result<InterpolatedImage> {
    Ok(GpInterpolator::new(cores, x_hat, gamma2, params, jitter)?.predict_grid(cores.width(), cores.height()))
}

/// Interpolates at explicit target points.
pub fn gp_interpolate_points(
    cores: &CoreMap,
    x_hat: &[f64],
    gamma2: f64,
    params: CovarianceParams,
    jitter: f64,
    targets: &[[f64; 2]],
) -> Result<PointPrediction> {
    Ok(GpInterpolator::new(cores, x_hat, gamma2, params, jitter)?.predict_points(targets))
}

/// Two-sided normal confidence half-width `z · sqrt(variance)` at `level`.
pub fn uncertainty_to_confidence(variance: &[f64], level: f64) -> Result<Vec<f64>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param("confidence level must lie in (0, 1)"));
    }
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * level);
    Ok(variance.iter().map(|v| z * v.max(0.0).sqrt()).collect())
}
