//! Core detection on a background image and maximum-likelihood fitting of
//! the prior correlation parameters `(ℓ, κ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Image;
use crate::model::{build_covariance, CoreMap, CovarianceParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    /// Detections closer than this (pixels) are merged, keeping the brighter.
    pub min_separation: f64,
    /// Threshold as a fraction of the image maximum.
    pub intensity_floor: f64,
    /// Width of the Gaussian whose blur is subtracted before peak finding;
    /// `None` searches the raw image.
    pub background_sigma: Option<f64>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig { min_separation: 2.0, intensity_floor: 0.5, background_sigma: Some(0.8) }
    }
}

/// [`detect_cores_with`] on the raw image, without background removal.
/// Suited to well separated spots; dense bundles need the filter of
/// [`DetectConfig::default`].
pub fn detect_cores(image: &Image, min_separation: f64, intensity_floor: f64) -> Result<CoreMap> {
    detect_cores_with(image, &DetectConfig { min_separation, intensity_floor, background_sigma: None })
}

/// Finds core centres as bright local maxima.
///
/// Spots of a dense bundle overlap, so peaks are searched in a
/// difference-of-Gaussians image `I − G_s * I` (zero-padded), which removes
/// the slowly varying sum of neighbouring tails. A pixel is a candidate when
/// the raw image is at or above `intensity_floor · max` and the filtered
/// image has a positive value not exceeded by any of its 8 neighbours.
/// Candidates are grouped into 8-connected components; each component yields
/// one centre, the mean of its pixels, refined to sub-pixel precision by a
/// parabola through the filtered peak and its horizontal and vertical
/// neighbours. Centres closer than `min_separation` are then suppressed
/// greedily, strongest first. Output is sorted by row, then column.
pub fn detect_cores_with(image: &Image, config: &DetectConfig) -> Result<CoreMap> {
    let DetectConfig { min_separation, intensity_floor, background_sigma } = *config;
    if !(0.0..=1.0).contains(&intensity_floor) {
        return Err(Error::param("intensity_floor must lie in [0, 1]"));
    }
    if !(min_separation >= 0.0) {
        return Err(Error::param("min_separation must be >= 0"));
    }
    let (w, h) = (image.width, image.height);
    let (lo, hi) = (image.min(), image.max());
    if !(hi > lo) {
        return Err(Error::param("image is constant"));
    }
    let thr = intensity_floor * hi;
    let response = match background_sigma {
        Some(s) if s > 0.0 => {
            let bg = gaussian_blur(image, s);
            Image { width: w, height: h, data: image.data.iter().zip(&bg.data).map(|(a, b)| a - b).collect() }
        }
        Some(_) => return Err(Error::param("background_sigma must be > 0")),
        None => Image { width: w, height: h, data: image.data.iter().map(|v| v - lo).collect() },
    };
    let at = |c: isize, r: isize| -> f64 {
        if c < 0 || r < 0 || c >= w as isize || r >= h as isize {
            f64::NEG_INFINITY
        } else {
            response.get(c as usize, r as usize)
        }
    };
    let mut peak = vec![false; w * h];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let v = at(c, r);
            if image.get(c as usize, r as usize) < thr || v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nb: for dr in -1..=1 {
                for dc in -1..=1 {
                    if (dr, dc) != (0, 0) && at(c + dc, r + dr) > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            peak[r as usize * w + c as usize] = is_max;
        }
    }

    // components of the local-maximum mask
    let mut label = vec![usize::MAX; w * h];
    let mut found: Vec<([f64; 2], f64)> = Vec::new();
    for start in 0..w * h {
        if !peak[start] || label[start] != usize::MAX {
            continue;
        }
        let id = found.len();
        let mut stack = vec![start];
        label[start] = id;
        let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
        let mut best = (f64::NEG_INFINITY, 0usize);
        while let Some(p) = stack.pop() {
            let (c, r) = ((p % w) as isize, (p / w) as isize);
            sx += c as f64;
            sy += r as f64;
            count += 1;
            if response.data[p] > best.0 {
                best = (response.data[p], p);
            }
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nc, nr) = (c + dc, r + dr);
                    if nc < 0 || nr < 0 || nc >= w as isize || nr >= h as isize {
                        continue;
                    }
                    let q = nr as usize * w + nc as usize;
                    if peak[q] && label[q] == usize::MAX {
                        label[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        let mut centre = [sx / count as f64, sy / count as f64];
        if count == 1 {
            let (c, r) = ((best.1 % w) as isize, (best.1 / w) as isize);
            centre[0] += parabolic_offset(at(c - 1, r), best.0, at(c + 1, r));
            centre[1] += parabolic_offset(at(c, r - 1), best.0, at(c, r + 1));
        }
        found.push((centre, best.0));
    }

    // strongest first; ties by position so the order is fixed
    found.sort_by(|a, b| {
        b.1.total_cmp(&a.1).then(a.0[1].total_cmp(&b.0[1])).then(a.0[0].total_cmp(&b.0[0]))
    });
    let mut kept: Vec<[f64; 2]> = Vec::new();
    let min2 = min_separation * min_separation;
    for (p, _) in found {
        if kept.iter().all(|q| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) >= min2) {
            kept.push(p);
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty("no cores found; lower intensity_floor".into()));
    }
    kept.sort_by(|a, b| a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0])));
    CoreMap::new(w, h, kept)
}

/// Separable Gaussian blur with unit-sum taps truncated at 4σ, zero-padded.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Image {
    let rad = (4.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-rad..=rad).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    let (w, h) = (image.width as isize, image.height as isize);
    let pass = |src: &Image, horizontal: bool| {
        Image::from_fn(src.width, src.height, |c, r| {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                let k = i as isize - rad;
                let (cc, rr) = if horizontal { (c as isize + k, r as isize) } else { (c as isize, r as isize + k) };
                if cc >= 0 && rr >= 0 && cc < w && rr < h {
                    acc += t * src.get(cc as usize, rr as usize);
                }
            }
            acc
        })
    };
    pass(&pass(image, true), false)
}

/// Vertex of the parabola through `(−1, l)`, `(0, c)`, `(1, r)`, within ±½.
fn parabolic_offset(l: f64, c: f64, r: f64) -> f64 {
    if !l.is_finite() || !r.is_finite() {
        return 0.0;
    }
    let den = l - 2.0 * c + r;
    if den >= 0.0 {
        return 0.0;
    }
    (0.5 * (l - r) / den).clamp(-0.5, 0.5)
}

/// Candidate values for the grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceGrid {
    pub length_scales: Vec<f64>,
    pub exponents: Vec<f64>,
}

impl Default for CovarianceGrid {
    /// `ℓ ∈ {1, …, 20}`, `κ ∈ {0.25, 0.5, …, 2}`.
    fn default() -> Self {
        CovarianceGrid {
            length_scales: (1..=20).map(f64::from).collect(),
            exponents: (1..=8).map(|k| 0.25 * k as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceFit {
    /// Average of the per-image maximizers.
    pub params: CovarianceParams,
    pub per_image: Vec<CovarianceParams>,
    /// Profile log-likelihood of each image at its maximizer.
    pub per_image_objective: Vec<f64>,
}

/// Zero-mean Gaussian log-density of `x` under `γ² Δ` with `γ²` replaced by
/// its maximizer `xᵀΔ⁻¹x / N`.
pub fn profile_log_likelihood(quad: f64, log_det: f64, n: usize) -> f64 {
    let n = n as f64;
    let g2 = quad / n;
    -0.5 * n * (2.0 * std::f64::consts::PI * g2).ln() - 0.5 * log_det - 0.5 * n
}

/// Grid-search maximum likelihood for `(ℓ, κ)`. Each training field is fitted
/// separately and the maximizers are averaged. Grid points whose covariance
/// cannot be factorized are skipped; among equal objectives the
/// lexicographically smallest `(ℓ, κ)` wins.
pub fn fit_covariance_params(
    cores: &CoreMap,
    training: &[Vec<f64>],
    grid: &CovarianceGrid,
    jitter: f64,
) -> Result<CovarianceFit> {
    if training.is_empty() {
        return Err(Error::param("at least one training field is required"));
    }
    for t in training {
        Error::check_len(cores.len(), t.len())?;
    }
    if grid.length_scales.is_empty() || grid.exponents.is_empty() {
        return Err(Error::param("covariance grid is empty"));
    }
    if grid.exponents.iter().any(|&k| !(k > 0.0 && k <= 2.0)) {
        return Err(Error::param("grid exponents must lie in (0, 2]"));
    }
    let mut points: Vec<(f64, f64)> = Vec::new();
    for &l in &grid.length_scales {
        for &k in &grid.exponents {
            points.push((l, k));
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut best: Vec<Option<(f64, (f64, f64))>> = vec![None; training.len()];
    for &(l, k) in &points {
        let params = CovarianceParams::new(l, k)?;
        let cov = match build_covariance(cores, params, jitter) {
            Ok(c) => c,
            Err(_) => {
                log::debug!("skipping (ℓ, κ) = ({l}, {k}): not positive definite");
                continue;
            }
        };
        let log_det = cov.log_det();
        for (t, x) in training.iter().enumerate() {
            let obj = profile_log_likelihood(cov.quad_form_inv(x), log_det, x.len());
            let better = match best[t] {
                None => true,
                Some((b, _)) => obj > b || (b.is_nan() && !obj.is_nan()),
            };
            if better {
                best[t] = Some((obj, (l, k)));
            }
        }
    }
    let mut per_image = Vec::with_capacity(training.len());
    let mut per_image_objective = Vec::with_capacity(training.len());
    for b in best {
        let (obj, (l, k)) = b.ok_or_else(|| Error::param("no grid point gives a positive-definite covariance"))?;
        per_image.push(CovarianceParams::new(l, k)?);
        per_image_objective.push(obj);
    }
    let m = per_image.len() as f64;
    let params = CovarianceParams::new(
        per_image.iter().map(|p| p.length_scale).sum::<f64>() / m,
        per_image.iter().map(|p| p.exponent).sum::<f64>() / m,
    )?;
    Ok(CovarianceFit { params, per_image, per_image_objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_JITTER;
    use crate::synth::{render_spots, sample_prior_field};

    #[test]
    fn single_and_double_blob() {
        let mut img = Image::zeros(20, 20);
        for r in 5..8 {
            for c in 9..12 {
                img.set(c, r, 100.0);
            }
        }
        let cores = detect_cores(&img, 2.0, 0.5).unwrap();
        assert_eq!(cores.positions(), &[[10.0, 6.0]]);

        for r in 14..17 {
            for c in 2..5 {
                img.set(c, r, 80.0);
            }
        }
        let cores = detect_cores(&img, 2.0, 0.5).unwrap();
        assert_eq!(cores.len(), 2);
        assert!(detect_cores(&Image::zeros(4, 4), 2.0, 0.5).is_err());
    }

    #[test]
    fn hex_spots_are_recovered() {
        let truth = CoreMap::hex_lattice(64, 64, 3.3, 4.0, 0.0, 0).unwrap();
        let img = render_spots(&truth, 2.0, 100.0);
        let found = detect_cores_with(&img, &DetectConfig::default()).unwrap();
        assert_eq!(found.len(), truth.len());
        let mut sq = 0.0;
        for p in truth.positions() {
            let d = found.positions().iter().map(|q| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).fold(f64::INFINITY, f64::min);
            sq += d;
        }
        assert!((sq / truth.len() as f64).sqrt() < 0.5);
    }

    #[test]
    fn detection_is_translation_equivariant() {
        let truth = CoreMap::hex_lattice(48, 48, 3.3, 10.0, 0.3, 2).unwrap();
        let img = render_spots(&truth, 2.0, 50.0);
        let cfg = DetectConfig::default();
        let a = detect_cores_with(&img, &cfg).unwrap();
        let b = detect_cores_with(&img.shifted(3, -2), &cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.positions().iter().zip(b.positions()) {
            assert!((p[0] + 3.0 - q[0]).abs() < 1e-12 && (p[1] - 2.0 - q[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_is_maximal_at_the_fit() {
        let cores = CoreMap::hex_lattice(30, 30, 3.3, 2.0, 0.0, 0).unwrap();
        let truth = build_covariance(&cores, CovarianceParams::new(6.0, 1.0).unwrap(), DEFAULT_JITTER).unwrap();
        let x = sample_prior_field(&truth, 4.0, 11).into_inner();
        let grid = CovarianceGrid { length_scales: vec![2.0, 4.0, 6.0, 8.0], exponents: vec![0.5, 1.0, 1.5] };
        let fit = fit_covariance_params(&cores, &[x.clone()], &grid, DEFAULT_JITTER).unwrap();
        for &l in &grid.length_scales {
            for &k in &grid.exponents {
                if let Ok(c) = build_covariance(&cores, CovarianceParams::new(l, k).unwrap(), DEFAULT_JITTER) {
                    let o = profile_log_likelihood(c.quad_form_inv(&x), c.log_det(), x.len());
                    assert!(fit.per_image_objective[0] >= o);
                }
            }
        }
        let twice = fit_covariance_params(&cores, &[x.clone(), x], &grid, DEFAULT_JITTER).unwrap();
        assert_eq!(twice.params, fit.params);
    }

    #[test]
    fn single_core_ties_to_smallest() {
        let cores = CoreMap::new(5, 5, vec![[2.0, 2.0]]).unwrap();
        let fit = fit_covariance_params(&cores, &[vec![3.0]], &CovarianceGrid::default(), 0.0).unwrap();
        assert_eq!(fit.params, CovarianceParams::new(1.0, 0.25).unwrap());
    }

    #[test]
    fn averages_per_image_maximizers() {
        let cores = CoreMap::hex_lattice(30, 30, 3.3, 2.0, 0.0, 0).unwrap();
        let grid = CovarianceGrid { length_scales: vec![2.0, 8.0], exponents: vec![1.0] };
        let a = sample_prior_field(
            &build_covariance(&cores, CovarianceParams::new(2.0, 1.0).unwrap(), DEFAULT_JITTER).unwrap(),
            1.0,
            1,
        );
        let b = sample_prior_field(
            &build_covariance(&cores, CovarianceParams::new(8.0, 1.0).unwrap(), DEFAULT_JITTER).unwrap(),
            1.0,
            2,
        );
        let fit = fit_covariance_params(&cores, &[a.into_inner(), b.into_inner()], &grid, DEFAULT_JITTER).unwrap();
        assert_eq!(fit.per_image[0].length_scale, 2.0);
        assert_eq!(fit.per_image[1].length_scale, 8.0);
        assert_eq!(fit.params.length_scale, 5.0);
    }
}
