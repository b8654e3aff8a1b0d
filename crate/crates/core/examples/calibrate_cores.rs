//! Locates cores on a rendered background image and fits the prior
//! correlation parameters from fields drawn from a known covariance.

use fiberdeconv::calib::{detect_cores_with, fit_covariance_params, CovarianceGrid, DetectConfig};
use fiberdeconv::model::{build_covariance, DEFAULT_JITTER};
use fiberdeconv::synth::{render_spots, sample_prior_field};
use fiberdeconv::{CoreMap, CovarianceParams};

fn main() -> fiberdeconv::Result<()> {
    let truth = CoreMap::hex_lattice(64, 64, 3.3, 4.0, 0.3, 9)?;
    let background = render_spots(&truth, 0.6, 200.0);
    let found = detect_cores_with(&background, &DetectConfig::default())?;
    println!("generated {} cores, detected {}", truth.len(), found.len());

    let cov = build_covariance(&found, CovarianceParams::new(8.0, 1.0)?, DEFAULT_JITTER)?;
    let training: Vec<Vec<f64>> = (0..2).map(|s| sample_prior_field(&cov, 4.0, s).to_vec()).collect();
    let fit = fit_covariance_params(&found, &training, &CovarianceGrid::default(), DEFAULT_JITTER)?;
    for (p, obj) in fit.per_image.iter().zip(&fit.per_image_objective) {
        println!("training image: ℓ = {}, κ = {} (log-likelihood {obj:.1})", p.length_scale, p.exponent);
    }
    println!("averaged: ℓ = {}, κ = {}", fit.params.length_scale, fit.params.exponent);
    Ok(())
}
