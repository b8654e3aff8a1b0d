//! MAP deconvolution with ADMM over the default five-value λ grid.

use fiberdeconv::admm::{lambda_sweep, AdmmConfig};
use fiberdeconv::model::{build_coupling_kernel, build_covariance, DEFAULT_JITTER};
use fiberdeconv::synth::{phantom, rmse, simulate_system_image, subsample_reference, SimConfig};
use fiberdeconv::{CoreMap, CovarianceParams, DeconvProblem, KernelParams};

fn main() -> fiberdeconv::Result<()> {
    let reference = phantom(96, 96, 1);
    let cores = CoreMap::hex_lattice(96, 96, 3.3, 2.0, 0.0, 0)?;
    let x_true = subsample_reference(&reference, &cores)?;
    let sim = simulate_system_image(&x_true, &cores, &SimConfig { sigma2_h: 10.0, rng_seed: 3, ..Default::default() })?;
    let h = build_coupling_kernel(&cores, KernelParams::gaussian(10.0))?;
    let cov = build_covariance(&cores, CovarianceParams::new(20.0, 1.75)?, DEFAULT_JITTER)?;
    let problem = DeconvProblem::new(sim.y.clone(), h, cov)?;
    println!("{} cores, RMSE before {:.1}", cores.len(), rmse(&x_true, &sim.y)?);

    let sweep = lambda_sweep(&problem, Some(&x_true), &AdmmConfig::default())?;
    for (i, e) in sweep.entries.iter().enumerate() {
        let mark = if Some(i) == sweep.best { "  <- best" } else { "" };
        println!("λ = {:>10.4}: RMSE {:.2}, {} iterations{mark}", e.lambda, e.rmse.unwrap_or(f64::NAN), e.result.iterations);
    }
    println!("sweep took {:.2} s", sweep.wall_time_s);
    Ok(())
}
