//! Kernel-misspecification sweep: data simulated with σ²_H = 10 and
//! deconvolved with widths 6 to 14, on a sparse bundle.

use fiberdeconv::synth::{phantom, sweep_experiment, SweepSpec};
use fiberdeconv::{CoreMap, CovarianceParams, Solver};

fn main() -> fiberdeconv::Result<()> {
    let reference = phantom(128, 128, 0);
    let cores = CoreMap::hex_lattice(128, 128, 9.5, 6.0, 0.0, 0)?;
    let widths = vec![6.0, 8.0, 10.0, 12.0, 14.0];
    let spec = SweepSpec {
        sigma2_h_sim: vec![10.0],
        sigma2_h_deconv: Some(widths.clone()),
        sigma2_n: vec![10.0],
        n_seeds: 10,
        base_seed: 1,
        solvers: vec![Solver::Vb, Solver::Admm],
        covariance: CovarianceParams::new(20.0, 1.75)?,
        jobs: 2,
        ..Default::default()
    };
    let rows = sweep_experiment(&reference, &cores, &spec)?;
    println!("{} cores", cores.len());
    for solver in &spec.solvers {
        let means: Vec<String> = widths
            .iter()
            .map(|w| {
                let v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.solver == *solver && r.sigma2_h_deconv == *w)
                    .filter_map(|r| r.rmse_after)
                    .collect();
                format!("{w}: {:.2}", v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        println!("{solver}: {}", means.join(", "));
    }
    Ok(())
}
