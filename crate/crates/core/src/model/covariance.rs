use serde::{Deserialize, Serialize};

use super::cores::distance;
use super::CoreMap;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SpdFactor};

/// Diagonal loading applied before factorizing the prior covariance.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Parameters of the stationary covariance `exp(-(d / length_scale)^exponent)`.
///
/// The kernel is positive-definite for `0 < exponent <= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceParams {
    pub length_scale: f64,
    pub exponent: f64,
}

impl CovarianceParams {
    pub fn new(length_scale: f64, exponent: f64) -> Result<Self> {
        let p = CovarianceParams { length_scale, exponent };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::param(format!("length_scale must be > 0, got {}", self.length_scale)));
        }
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(Error::param(format!("exponent must be > 0, got {}", self.exponent)));
        }
        Ok(())
    }

    pub fn correlation(&self, d: f64) -> f64 {
        (-(d / self.length_scale).powf(self.exponent)).exp()
    }

    /// Correlation matrix between two point sets (rows: `a`, columns: `b`).
    pub fn cross(&self, a: &[[f64; 2]], b: &[[f64; 2]]) -> DenseMatrix<f64> {
        DenseMatrix::from_fn(a.len(), b.len(), |i, j| self.correlation(distance(a[i], b[j])))
    }
}

/// Prior covariance `Δ` over the cores with its cached Cholesky factor and inverse.
#[derive(Debug, Clone)]
pub struct SpatialCovariance {
    matrix: DenseMatrix<f64>,
    params: CovarianceParams,
    jitter: f64,
    factor: SpdFactor,
    inverse: DenseMatrix<f64>,
}

impl SpatialCovariance {
    /// Builds from an explicit symmetric positive-definite matrix.
    pub fn from_matrix(matrix: DenseMatrix<f64>, params: CovarianceParams) -> Result<Self> {
        let factor = SpdFactor::new(matrix.as_ref()).map_err(|_| not_pd())?;
        let inverse = factor.inverse();
        Ok(SpatialCovariance { matrix, params, jitter: 0.0, factor, inverse })
    }

    pub fn matrix(&self) -> &DenseMatrix<f64> {
        &self.matrix
    }

    pub fn params(&self) -> CovarianceParams {
        self.params
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// Cached `Δ⁻¹`.
    pub fn inverse(&self) -> &DenseMatrix<f64> {
        &self.inverse
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// `xᵀ Δ⁻¹ x`.
    pub fn quad_form_inv(&self, x: &[f64]) -> f64 {
        self.factor.inv_quad_form(x)
    }

    pub fn log_det(&self) -> f64 {
        self.factor.log_det()
    }
}

fn not_pd() -> Error {
    Error::numerical("covariance not PD; increase jitter or reduce ℓ")
}

pub fn build_covariance(
    cores: &CoreMap,
    params: CovarianceParams,
    jitter: f64,
) -> Result<SpatialCovariance> {
    params.validate()?;
    if !(jitter >= 0.0) {
        return Err(Error::param("jitter must be non-negative"));
    }
    let pos = cores.positions();
    let mut matrix = params.cross(pos, pos);
    for i in 0..pos.len() {
        matrix[(i, i)] += jitter;
    }
    let factor = SpdFactor::new(matrix.as_ref()).map_err(|_| not_pd())?;
    let inverse = factor.inverse();
    Ok(SpatialCovariance { matrix, params, jitter, factor, inverse })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, step: f64) -> CoreMap {
        CoreMap::new(32, 4, (0..n).map(|i| [1.0 + step * i as f64, 2.0]).collect()).unwrap()
    }

    #[test]
    fn unit_diagonal_and_unit_argument() {
        let p = CovarianceParams::new(2.5, 1.0).unwrap();
        let cov = build_covariance(&line(2, 2.5), p, 0.0).unwrap();
        assert_eq!(cov.matrix()[(0, 0)], 1.0);
        assert!((cov.matrix()[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((cov.matrix()[(0, 1)] - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn three_collinear_cores() {
        let p = CovarianceParams::new(2.0, 1.0).unwrap();
        let cov = build_covariance(&line(3, 1.0), p, 0.0).unwrap();
        let a = (-0.5f64).exp();
        let b = (-1.0f64).exp();
        let expected = [[1.0, a, b], [a, 1.0, a], [b, a, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((cov.matrix()[(i, j)] - expected[i][j]).abs() < 1e-15);
            }
        }
        // Closed-form spectrum: (1,0,-1) gives 1 - b; the symmetric subspace
        // reduces to [[1 + b, √2 a], [√2 a, 1]].
        let disc = (b * b + 8.0 * a * a).sqrt();
        let eig = [1.0 - b, (2.0 + b - disc) / 2.0, (2.0 + b + disc) / 2.0];
        assert!(eig.iter().all(|&l| l > 0.0));
        let det: f64 = eig.iter().product();
        let direct = 1.0 - 2.0 * a * a - b * b + 2.0 * a * a * b;
        assert!((det - direct).abs() < 1e-14);
        assert!((cov.log_det() - det.ln()).abs() < 1e-12);
    }

    #[test]
    fn inverse_is_cached_and_accurate() {
        let cores = CoreMap::hex_lattice(24, 24, 3.3, 1.0, 0.4, 2).unwrap();
        let cov = build_covariance(&cores, CovarianceParams::new(4.0, 1.0).unwrap(), DEFAULT_JITTER)
            .unwrap();
        let prod = cov.matrix() * cov.inverse();
        let n = cores.len();
        let mut err = 0.0;
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                err += (prod[(i, j)] - e).powi(2);
            }
        }
        assert!(err.sqrt() / (n as f64).sqrt() < 1e-8);
    }

    #[test]
    fn coincident_cores_need_jitter() {
        let cores = CoreMap::new(8, 8, vec![[1.0, 1.0], [1.0, 1.0 + 1e-13]]).unwrap();
        let p = CovarianceParams::new(5.0, 2.0).unwrap();
        let err = build_covariance(&cores, p, 0.0).unwrap_err();
        assert!(err.to_string().contains("increase jitter"));
        assert!(build_covariance(&cores, p, 1e-6).is_ok());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(CovarianceParams::new(0.0, 1.0).is_err());
        assert!(CovarianceParams::new(1.0, -1.0).is_err());
    }
}
