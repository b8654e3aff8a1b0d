//! Simulates a fiber-bundle acquisition of the built-in phantom and writes
//! the system image and core observations to a temporary directory.

use fiberdeconv::io::{write_field_csv, write_pgm_preview};
use fiberdeconv::synth::{phantom, rmse, simulate_system_image, subsample_reference, SimConfig};
use fiberdeconv::CoreMap;

fn main() -> fiberdeconv::Result<()> {
    let reference = phantom(128, 128, 0);
    let cores = CoreMap::hex_lattice(128, 128, 3.3, 2.0, 0.0, 0)?;
    let x_true = subsample_reference(&reference, &cores)?;
    println!("{} cores, coverage {:.1}%", cores.len(), 100.0 * cores.coverage());

    for sigma2_h in [5.0, 10.0, 20.0] {
        let sim = simulate_system_image(&x_true, &cores, &SimConfig { sigma2_h, rng_seed: 1, ..Default::default() })?;
        println!("σ²_H = {sigma2_h:>4}: RMSE(y, x) = {:.1}", rmse(&x_true, &sim.y)?);
        if sigma2_h == 10.0 {
            let dir = std::env::temp_dir().join("fiberdeconv-simulate");
            std::fs::create_dir_all(&dir)?;
            write_pgm_preview(dir.join("g.pgm"), &sim.g)?;
            write_field_csv(dir.join("y.csv"), &sim.y)?;
            println!("wrote {}", dir.display());
        }
    }
    Ok(())
}
