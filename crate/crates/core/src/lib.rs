//! Bayesian restoration of fiber-bundle endomicroscopy images.
//!
//! A fiber bundle samples the scene only at its cores, and light leaks
//! between neighbouring cores. Given per-core observations `y = H x + w`,
//! this crate estimates the true core intensities `x` with one of three
//! interchangeable solvers and interpolates them onto the full pixel grid
//! with a Gaussian process that also yields a per-pixel uncertainty map.
//!
//! * [`model`]: core geometry, coupling operator `H`, prior covariance `Δ`,
//!   likelihood and joint posterior.
//! * [`mcmc`]: Gibbs sampler producing MMSE estimates.
//! * [`vb`]: mean-field variational Bayes.
//! * [`admm`]: MAP estimate of the nonnegative quadratic problem.
//! * [`gp`]: Gaussian-process interpolation and confidence maps.
//! * [`calib`]: core detection and covariance-parameter fitting.
//! * [`synth`]: synthetic acquisitions, RMSE and parameter sweeps.
//! * [`io`] and [`cli`]: file formats and the command-line front end.

pub mod admm;
pub mod calib;
pub mod cli;
pub mod error;
pub mod estimate;
pub mod gp;
pub mod io;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod synth;
pub mod vb;

pub use error::{Error, Result};
pub use estimate::{EstimateResult, Solver};
pub use model::{
    CoreMap, CouplingKernel, CovarianceParams, DeconvProblem, Hyperparams, IntensityField,
    KernelParams, SpatialCovariance,
};
