use serde::{Deserialize, Serialize};

use super::{CoreMap, IntensityField};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseMatrix};

/// Typical center-to-center distance between neighbouring cores, in pixels.
pub const TYPICAL_CORE_SPACING: f64 = 3.3;

/// Parameters of the isotropic generalized-Gaussian coupling kernel
/// `exp(-(d / alpha_h)^beta_h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Width in pixels.
    pub alpha_h: f64,
    /// Shape; 2 gives the ordinary Gaussian.
    pub beta_h: f64,
    /// Pairs farther apart than this are uncoupled. 0 disables truncation.
    pub truncation_radius: f64,
    /// Scale each row to unit sum (energy-conserving coupling).
    pub row_normalize: bool,
}

impl Default for KernelParams {
    /// Values characterised for the wide-field LED system.
    fn default() -> Self {
        KernelParams {
            alpha_h: 4.0,
            beta_h: 0.8,
            truncation_radius: 6.0 * TYPICAL_CORE_SPACING,
            row_normalize: true,
        }
    }
}

impl KernelParams {
    /// Gaussian kernel `exp(-d² / (2 σ²_H))`, unnormalized, as used for
    /// synthetic experiments. The truncation radius is widened so that dropped
    /// entries stay below 1e-6.
    pub fn gaussian(sigma2_h: f64) -> Self {
        let alpha_h = (2.0 * sigma2_h).sqrt();
        let tail = (sigma2_h.max(0.0) * 2.0 * 1e6f64.ln()).sqrt();
        KernelParams {
            alpha_h,
            beta_h: 2.0,
            truncation_radius: tail.max(6.0 * TYPICAL_CORE_SPACING),
            row_normalize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_h > 0.0 && self.alpha_h.is_finite()) {
            return Err(Error::param(format!("alpha_h must be > 0, got {}", self.alpha_h)));
        }
        if !(self.beta_h > 0.0 && self.beta_h.is_finite()) {
            return Err(Error::param(format!("beta_h must be > 0, got {}", self.beta_h)));
        }
        if !(self.truncation_radius >= 0.0) {
            return Err(Error::param("truncation_radius must be >= 0"));
        }
        Ok(())
    }

    /// Kernel value at distance `d`, before truncation and normalization.
    pub fn weight(&self, d: f64) -> f64 {
        (-(d / self.alpha_h).powf(self.beta_h)).exp()
    }
}

/// Sparse cross-coupling operator `H`.
#[derive(Debug, Clone)]
pub struct CouplingKernel {
    matrix: CsrMatrix,
    params: KernelParams,
}

impl CouplingKernel {
    /// Wraps an explicit matrix, e.g. for hand-built test instances.
    pub fn from_matrix(matrix: CsrMatrix, params: KernelParams) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::param("coupling matrix must be square"));
        }
        Ok(CouplingKernel { matrix, params })
    }

    pub fn identity(n: usize) -> Self {
        CouplingKernel {
            matrix: CsrMatrix::identity(n),
            params: KernelParams { truncation_radius: 0.0, row_normalize: false, ..Default::default() },
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.matvec(x)
    }

    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.matvec_transpose(x)
    }

    /// Dense `HᵀH`.
    pub fn gram(&self) -> DenseMatrix<f64> {
        self.matrix.gram()
    }

    pub fn to_dense(&self) -> DenseMatrix<f64> {
        self.matrix.to_dense()
    }
}

pub fn build_coupling_kernel(cores: &CoreMap, params: KernelParams) -> Result<CouplingKernel> {
    params.validate()?;
    let rows: Vec<Vec<(usize, f64)>> = cores
        .neighbors_within(params.truncation_radius)
        .into_iter()
        .map(|nbrs| {
            nbrs.into_iter()
                .map(|(j, d)| (j, params.weight(d)))
                .filter(|&(_, w)| w != 0.0)
                .collect()
        })
        .collect();
    if rows.iter().flatten().any(|&(_, w)| !w.is_finite()) {
        return Err(Error::numerical("non-finite coupling weight"));
    }
    let mut matrix = CsrMatrix::from_rows(cores.len(), rows);
    if params.row_normalize {
        let inv: Vec<f64> = matrix.row_sums().iter().map(|s| 1.0 / s).collect();
        matrix.scale_rows(&inv);
    }
    Ok(CouplingKernel { matrix, params })
}

/// Noise-free forward model `H x`.
pub fn forward_apply(h: &CouplingKernel, x: &IntensityField) -> Result<IntensityField> {
    Error::check_len(h.len(), x.len())?;
    Ok(IntensityField::new(h.apply(x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize, step: f64) -> CoreMap {
        CoreMap::new(64, 8, (0..n).map(|i| [1.0 + step * i as f64, 4.0]).collect()).unwrap()
    }

    #[test]
    fn unnormalized_diagonal_is_one_and_symmetric() {
        let cores = CoreMap::hex_lattice(30, 30, 3.3, 1.0, 0.7, 3).unwrap();
        let p = KernelParams { row_normalize: false, ..Default::default() };
        let h = build_coupling_kernel(&cores, p).unwrap();
        for i in 0..h.len() {
            assert_eq!(h.get(i, i), 1.0);
            for (j, v) in h.matrix().row(i) {
                assert_eq!(v, h.get(j, i));
            }
        }
    }

    #[test]
    fn real_system_neighbour_weight() {
        // exp(-(3.3/4)^0.8) evaluated with mpmath at 30 digits.
        let cores = chain(2, 3.3);
        let p = KernelParams { row_normalize: false, ..Default::default() };
        let h = build_coupling_kernel(&cores, p).unwrap();
        assert!((h.get(0, 1) - 0.42428075545324216).abs() < 1e-12);
    }

    #[test]
    fn gaussian_special_case_matches_squared_exponential() {
        let cores = chain(5, 3.3);
        let h = build_coupling_kernel(&cores, KernelParams::gaussian(20.0)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d = cores.distance(i, j);
                let expected = (-d * d / (2.0 * 20.0)).exp();
                assert!((h.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncation_and_identity() {
        let cores = chain(4, 3.3);
        let p = KernelParams { truncation_radius: 3.0, row_normalize: false, ..Default::default() };
        let h = build_coupling_kernel(&cores, p).unwrap();
        assert_eq!(h.matrix().nnz(), 4);
        let x = IntensityField::new(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(forward_apply(&h, &x).unwrap(), x);
        let p = KernelParams { truncation_radius: 7.0, row_normalize: false, ..Default::default() };
        let h = build_coupling_kernel(&cores, p).unwrap();
        assert_eq!(h.get(0, 3), 0.0);
        assert!(h.get(0, 2) > 0.0);
    }

    #[test]
    fn row_normalization() {
        let cores = CoreMap::hex_lattice(30, 30, 3.3, 1.0, 0.5, 1).unwrap();
        let h = build_coupling_kernel(&cores, KernelParams::default()).unwrap();
        for s in h.matrix().row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_matvec_matches_dense() {
        let cores = chain(3, 2.0);
        let p = KernelParams::gaussian(4.0);
        let h = build_coupling_kernel(&cores, p).unwrap();
        let a = (-4.0f64 / 8.0).exp();
        let b = (-16.0f64 / 8.0).exp();
        let x = IntensityField::new(vec![1.0, -2.0, 3.0]);
        let expected = [1.0 - 2.0 * a + 3.0 * b, a - 2.0 + 3.0 * a, b - 2.0 * a + 3.0];
        let got = forward_apply(&h, &x).unwrap();
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-14);
        }
        assert!(forward_apply(&h, &IntensityField::zeros(2)).is_err());
        assert!(forward_apply(&h, &IntensityField::zeros(3)).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_params() {
        let cores = chain(2, 1.0);
        let bad = KernelParams { alpha_h: 0.0, ..Default::default() };
        assert!(matches!(build_coupling_kernel(&cores, bad), Err(Error::Parameter(_))));
        let bad = KernelParams { beta_h: -1.0, ..Default::default() };
        assert!(build_coupling_kernel(&cores, bad).is_err());
    }
}
