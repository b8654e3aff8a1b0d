use fiberdeconv::calib::{detect_cores_with, fit_covariance_params, CovarianceGrid, DetectConfig};
use fiberdeconv::io::{decode_pgm, encode_pgm};
use fiberdeconv::model::{build_covariance, DEFAULT_JITTER};
use fiberdeconv::synth::{render_spots, sample_prior_field};
use fiberdeconv::{CoreMap, CovarianceParams};

fn two_hundred_cores(seed: u64) -> CoreMap {
    let m = CoreMap::hex_lattice(49, 49, 3.3, 2.0, 0.4, seed).unwrap();
    let positions = m.positions()[..200].to_vec();
    CoreMap::new(49, 49, positions).unwrap()
}

fn single_field_estimates() -> Vec<f64> {
    let grid = CovarianceGrid::default();
    (0..20u64)
        .map(|seed| {
            let cores = two_hundred_cores(seed);
            let cov = build_covariance(&cores, CovarianceParams::new(10.0, 1.0).unwrap(), DEFAULT_JITTER).unwrap();
            let x = sample_prior_field(&cov, 3.0, 1000 + seed);
            fit_covariance_params(&cores, &[x.to_vec()], &grid, DEFAULT_JITTER).unwrap().params.length_scale
        })
        .collect()
}

// One field of 200 cores does not pin ℓ to a unit cell: an independent numpy
// fit of the same likelihood hits ℓ = 10 in only 2-4 of 20 seeds.
#[test]
#[ignore = "single-field estimate is too variable for a unit-cell window"]
fn length_scale_in_true_cell_for_most_seeds() {
    let est = single_field_estimates();
    let hits = est.iter().filter(|&&l| l == 10.0).count();
    assert!(hits >= 18, "{hits}/20 seeds, ℓ̂ = {est:?}");
}

#[test]
fn length_scale_estimates_centre_on_truth() {
    let mut est = single_field_estimates();
    est.sort_by(f64::total_cmp);
    let median = 0.5 * (est[9] + est[10]);
    assert!((7.0..=13.0).contains(&median), "ℓ̂ = {est:?}");
    let near = est.iter().filter(|&&l| (5.0..=20.0).contains(&l)).count();
    assert!(near >= 18, "ℓ̂ = {est:?}");
}

#[test]
fn argmax_matches_numpy_on_fixed_field() {
    let mut positions = Vec::new();
    let mut x = Vec::new();
    for i in 0..200 {
        let r = i / 14;
        let px = 2.0 + (i % 14) as f64 * 9.5 + if r % 2 == 1 { 4.75 } else { 0.0 };
        let py = 2.0 + r as f64 * 8.25;
        positions.push([px, py]);
        x.push((px / 4.0).cos() + (py / 5.0).sin() + 0.5 * ((px + py) / 3.0).cos());
    }
    let cores = CoreMap::new(150, 130, positions).unwrap();
    let fit = fit_covariance_params(&cores, &[x], &CovarianceGrid::default(), DEFAULT_JITTER).unwrap();
    assert_eq!((fit.params.length_scale, fit.params.exponent), (11.0, 2.0));
    let obj = fit.per_image_objective[0];
    assert!((obj - -269.74954760556864).abs() < 1e-6 * 269.75, "{obj}");
}

#[test]
fn detection_survives_pgm_round_trip() {
    let truth = CoreMap::hex_lattice(64, 64, 3.3, 4.0, 0.3, 2).unwrap();
    let spots = render_spots(&truth, 0.6, 250.0);
    let img = decode_pgm(&encode_pgm(&spots, 255).unwrap()).unwrap();
    let found = detect_cores_with(&img, &DetectConfig::default()).unwrap();
    assert_eq!(found.len(), truth.len());
}
