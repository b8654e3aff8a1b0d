#![allow(dead_code)]

use fiberdeconv::linalg::{CsrMatrix, DenseMatrix};
use fiberdeconv::{CouplingKernel, CovarianceParams, DeconvProblem, IntensityField, KernelParams, SpatialCovariance};

/// Posterior mean of `x` for [`two_core_problem`] under the default
/// hyperparameters, with σ², γ² and β integrated out. Computed offline by
/// nested quadrature (Simpson on a 2401² grid over [0, 12]², 400-point
/// Gauss-Legendre in ln β), stable to 1e-8 under grid refinement.
pub const TWO_CORE_POSTERIOR_MEAN: [f64; 2] = [3.599306342054, 0.212739864077];

/// `H = [[1, .3], [.3, 1]]`, `Δ = [[1, .5], [.5, 1]]`, `y = (4, 0.5)`. The
/// unconstrained solution has a negative second entry, so the positivity
/// constraint matters.
pub fn two_core_problem() -> DeconvProblem {
    dense_problem(&[[1.0, 0.3], [0.3, 1.0]], &[[1.0, 0.5], [0.5, 1.0]], &[4.0, 0.5])
}

/// As [`TWO_CORE_POSTERIOR_MEAN`] for [`two_core_interior_problem`].
pub const TWO_CORE_INTERIOR_POSTERIOR_MEAN: [f64; 2] = [3.337647493473, 2.006000502917];

/// Same operators with `y = (4, 3)`; the posterior sits well inside the
/// positive quadrant.
pub fn two_core_interior_problem() -> DeconvProblem {
    dense_problem(&[[1.0, 0.3], [0.3, 1.0]], &[[1.0, 0.5], [0.5, 1.0]], &[4.0, 3.0])
}

pub fn dense_problem<const N: usize>(h: &[[f64; N]; N], delta: &[[f64; N]; N], y: &[f64; N]) -> DeconvProblem {
    let hm = DenseMatrix::from_fn(N, N, |i, j| h[i][j]);
    let dm = DenseMatrix::from_fn(N, N, |i, j| delta[i][j]);
    problem_from(hm, dm, y.to_vec())
}

pub fn problem_from(h: DenseMatrix<f64>, delta: DenseMatrix<f64>, y: Vec<f64>) -> DeconvProblem {
    let kernel = CouplingKernel::from_matrix(CsrMatrix::from_dense(&h), KernelParams::default()).unwrap();
    let cov = SpatialCovariance::from_matrix(delta, CovarianceParams::new(1.0, 1.0).unwrap()).unwrap();
    DeconvProblem::new(IntensityField::new(y), kernel, cov).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation.
pub fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
