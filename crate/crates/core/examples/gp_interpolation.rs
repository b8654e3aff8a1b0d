//! Gaussian-process interpolation of deconvolved core intensities onto the
//! pixel grid, with a 95% confidence half-width map.

use fiberdeconv::estimate::{solve, SolverSettings};
use fiberdeconv::gp::{uncertainty_to_confidence, GpInterpolator};
use fiberdeconv::io::{write_pgm_preview, Image};
use fiberdeconv::model::{build_coupling_kernel, build_covariance, DEFAULT_JITTER};
use fiberdeconv::synth::{phantom, simulate_system_image, subsample_reference, SimConfig};
use fiberdeconv::{CoreMap, CovarianceParams, DeconvProblem, KernelParams, Solver};

fn main() -> fiberdeconv::Result<()> {
    let (w, h) = (96, 96);
    let reference = phantom(w, h, 1);
    let cores = CoreMap::hex_lattice(w, h, 3.3, 2.0, 0.0, 0)?;
    let x_true = subsample_reference(&reference, &cores)?;
    let sim = simulate_system_image(&x_true, &cores, &SimConfig { sigma2_h: 10.0, rng_seed: 3, ..Default::default() })?;
    let params = CovarianceParams::new(20.0, 1.75)?;
    let cov = build_covariance(&cores, params, DEFAULT_JITTER)?;
    let problem = DeconvProblem::new(sim.y, build_coupling_kernel(&cores, KernelParams::gaussian(10.0))?, cov.clone())?;
    let est = solve(&problem, Solver::Vb, &SolverSettings::default(), None)?;
    let gamma2 = est.gamma2.expect("VB estimates γ²");

    let gp = GpInterpolator::from_covariance(&cores, &est.x, gamma2, &cov)?;
    let grid = gp.predict_grid(w, h);
    let err = grid.mean.data.iter().zip(&reference.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (w * h) as f64;
    println!("pixel RMSE against the reference {:.2}", err.sqrt());
    println!("variance range [{:.3e}, {:.3e}], bound 1/γ² = {:.3e}", grid.variance.min(), grid.variance.max(), 1.0 / gamma2);

    let hw = Image::new(w, h, uncertainty_to_confidence(&grid.variance.data, 0.95)?)?;
    let dir = std::env::temp_dir().join("fiberdeconv-gp");
    std::fs::create_dir_all(&dir)?;
    write_pgm_preview(dir.join("mean.pgm"), &grid.mean)?;
    write_pgm_preview(dir.join("halfwidth.pgm"), &hw)?;
    println!("wrote {}", dir.display());
    Ok(())
}
