//! Shared mathematical objects: core geometry, the cross-coupling operator,
//! the spatial prior covariance and the hierarchical posterior.

mod cores;
mod covariance;
mod field;
mod kernel;
pub(crate) mod posterior;

pub use cores::CoreMap;
pub use covariance::{build_covariance, CovarianceParams, SpatialCovariance, DEFAULT_JITTER};
pub use field::IntensityField;
pub use kernel::{build_coupling_kernel, forward_apply, CouplingKernel, KernelParams};
pub use posterior::{
    add_noise, log_likelihood, log_posterior, DeconvProblem, Hyperparams, PosteriorPoint,
};
