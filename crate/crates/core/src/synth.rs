//! Synthetic acquisitions and evaluation.
//!
//! A reference image is sampled at the core positions, coupled through a
//! Gaussian kernel, placed back on the pixel grid, blurred, corrupted by
//! pixel noise and finally read out once per core.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{solve, Solver, SolverSettings};
use crate::io::Image;
use crate::model::{
    build_coupling_kernel, build_covariance, CoreMap, CovarianceParams, DeconvProblem, IntensityField,
    KernelParams, SpatialCovariance, DEFAULT_JITTER,
};

/// How a core's observation is read from the system image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extraction {
    /// Maximum over a disk of radius `ceil(σ_C)` around the core pixel.
    #[default]
    CoreMax,
    /// The value at the core pixel.
    CoreValue,
}

/// Scaling of the truncated blur kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurNormalization {
    /// Central tap equal to 1, so a core's peak keeps its coupled intensity.
    #[default]
    Peak,
    /// Taps sum to 1.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Variance of the Gaussian coupling kernel.
    pub sigma2_h: f64,
    /// Variance of the spatial blur.
    pub sigma2_c: f64,
    /// Pixel noise variance.
    pub sigma2_n: f64,
    pub rng_seed: u64,
    pub extraction: Extraction,
    pub blur_normalization: BlurNormalization,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sigma2_h: 10.0,
            sigma2_c: 2.0,
            sigma2_n: 10.0,
            rng_seed: 0,
            extraction: Extraction::default(),
            blur_normalization: BlurNormalization::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_h > 0.0 && self.sigma2_h.is_finite()) {
            return Err(Error::param("sigma2_h must be > 0"));
        }
        if !(self.sigma2_c >= 0.0 && self.sigma2_c.is_finite()) {
            return Err(Error::param("sigma2_c must be >= 0"));
        }
        if !(self.sigma2_n >= 0.0 && self.sigma2_n.is_finite()) {
            return Err(Error::param("sigma2_n must be >= 0"));
        }
        Ok(())
    }
}

/// Simulated acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemImage {
    /// Full noisy image.
    pub g: Image,
    /// Per-core observations read from `g`.
    pub y: IntensityField,
}

/// Reference intensity at each (rounded) core position.
pub fn subsample_reference(image: &Image, cores: &CoreMap) -> Result<IntensityField> {
    cores
        .positions()
        .iter()
        .map(|p| {
            let (c, r) = (p[0].round(), p[1].round());
            if c < 0.0 || r < 0.0 || c >= image.width as f64 || r >= image.height as f64 {
                return Err(Error::param(format!("core at ({}, {}) lies outside the image", p[0], p[1])));
            }
            Ok(image.get(c as usize, r as usize))
        })
        .collect::<Result<Vec<_>>>()
        .map(IntensityField::new)
}

/// Square blur stencil of half-width `ceil(4σ)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    pub radius: usize,
    pub taps: Vec<f64>,
}

impl BlurKernel {
    pub fn new(sigma2_c: f64, norm: BlurNormalization) -> Self {
        if sigma2_c <= 0.0 {
            return BlurKernel { radius: 0, taps: vec![1.0] };
        }
        let radius = (4.0 * sigma2_c.sqrt()).ceil() as usize;
        let side = 2 * radius + 1;
        let cut2 = 16.0 * sigma2_c;
        let mut taps = Vec::with_capacity(side * side);
        for dy in 0..side {
            for dx in 0..side {
                let (a, b) = (dx as f64 - radius as f64, dy as f64 - radius as f64);
                let d2 = a * a + b * b;
                taps.push(if d2 <= cut2 { (-d2 / (2.0 * sigma2_c)).exp() } else { 0.0 });
            }
        }
        if norm == BlurNormalization::Sum {
            let s: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t /= s);
        }
        BlurKernel { radius, taps }
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// Adds `value · kernel` centred on `(col, row)`, clipping at the border.
    fn stamp(&self, img: &mut Image, col: usize, row: usize, value: f64) {
        let r = self.radius as isize;
        let side = 2 * self.radius + 1;
        for dy in -r..=r {
            let y = row as isize + dy;
            if y < 0 || y >= img.height as isize {
                continue;
            }
            for dx in -r..=r {
                let x = col as isize + dx;
                if x < 0 || x >= img.width as isize {
                    continue;
                }
                let t = self.taps[(dy + r) as usize * side + (dx + r) as usize];
                img.data[y as usize * img.width + x as usize] += value * t;
            }
        }
    }
}

/// Couples, blurs, adds pixel noise and extracts one value per core.
///
/// Coupled intensities are deposited at the rounded core pixels of a
/// `cores.width() × cores.height()` canvas; the blur is zero-padded.
pub fn simulate_system_image(x_true: &[f64], cores: &CoreMap, config: &SimConfig) -> Result<SystemImage> {
    config.validate()?;
    Error::check_len(cores.len(), x_true.len())?;
    let kernel = build_coupling_kernel(cores, KernelParams::gaussian(config.sigma2_h))?;
    let coupled = kernel.apply(x_true);
    let blur = BlurKernel::new(config.sigma2_c, config.blur_normalization);
    let mut g = Image::zeros(cores.width(), cores.height());
    for (i, v) in coupled.iter().enumerate() {
        let (c, r) = cores.pixel(i);
        blur.stamp(&mut g, c, r, *v);
    }
    if config.sigma2_n > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let sd = config.sigma2_n.sqrt();
        for v in g.data.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sd * z;
        }
    }
    let y = extract(&g, cores, config.extraction, config.sigma2_c.sqrt().ceil() as usize);
    Ok(SystemImage { g, y })
}

pub fn extract(g: &Image, cores: &CoreMap, mode: Extraction, radius: usize) -> IntensityField {
    (0..cores.len())
        .map(|i| {
            let (c, r) = cores.pixel(i);
            match mode {
                Extraction::CoreValue => g.get(c, r),
                Extraction::CoreMax => {
                    let rad = radius as isize;
                    let mut best = f64::NEG_INFINITY;
                    for dy in -rad..=rad {
                        for dx in -rad..=rad {
                            let (x, y) = (c as isize + dx, r as isize + dy);
                            if dx * dx + dy * dy > rad * rad
                                || x < 0
                                || y < 0
                                || x >= g.width as isize
                                || y >= g.height as isize
                            {
                                continue;
                            }
                            best = best.max(g.get(x as usize, y as usize));
                        }
                    }
                    best
                }
            }
        })
        .collect()
}

/// Root mean square difference.
pub fn rmse(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    Error::check_len(x.len(), x_hat.len())?;
    if x.is_empty() {
        return Err(Error::Empty("rmse of empty fields".into()));
    }
    let s: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((s / x.len() as f64).sqrt())
}

/// Smooth random test image with values in `[0, 255]`: a sum of Gaussian
/// blobs of both signs over a gentle gradient, min–max stretched.
pub fn phantom(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = rand_distr::Uniform::new(0.0f64, 1.0).unwrap();
    let scale = width.max(height) as f64;
    let blobs: Vec<[f64; 4]> = (0..14)
        .map(|_| {
            let cx = unit.sample(&mut rng) * width as f64;
            let cy = unit.sample(&mut rng) * height as f64;
            let s = scale * (0.04 + 0.16 * unit.sample(&mut rng));
            let a = if unit.sample(&mut rng) < 0.75 { 1.0 } else { -0.6 } * (0.4 + unit.sample(&mut rng));
            [cx, cy, s, a]
        })
        .collect();
    let (gx, gy) = (unit.sample(&mut rng) - 0.5, unit.sample(&mut rng) - 0.5);
    let raw = Image::from_fn(width, height, |c, r| {
        let (x, y) = (c as f64, r as f64);
        let mut v = 0.3 * (gx * x + gy * y) / scale;
        for b in &blobs {
            let d2 = (x - b[0]).powi(2) + (y - b[1]).powi(2);
            v += b[3] * (-d2 / (2.0 * b[2] * b[2])).exp();
        }
        v
    });
    let (lo, hi) = (raw.min(), raw.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    Image { width, height, data: raw.data.iter().map(|v| 255.0 * (v - lo) / span).collect() }
}

/// Renders unit-peak Gaussian spots of variance `sigma2` at the core
/// positions, as seen on a uniformly illuminated bundle.
pub fn render_spots(cores: &CoreMap, sigma2: f64, peak: f64) -> Image {
    let reach = (4.0 * sigma2.sqrt()).ceil() as isize;
    let mut img = Image::zeros(cores.width(), cores.height());
    for p in cores.positions() {
        let (pc, pr) = (p[0].round() as isize, p[1].round() as isize);
        for r in (pr - reach).max(0)..=(pr + reach).min(cores.height() as isize - 1) {
            for c in (pc - reach).max(0)..=(pc + reach).min(cores.width() as isize - 1) {
                let d2 = (c as f64 - p[0]).powi(2) + (r as f64 - p[1]).powi(2);
                let v = img.get(c as usize, r as usize) + peak * (-d2 / (2.0 * sigma2)).exp();
                img.set(c as usize, r as usize, v);
            }
        }
    }
    img
}

/// Per-cell seed derived from the base seed and the cell indices.
pub fn cell_seed(base: u64, indices: &[u64]) -> u64 {
    let mut h = splitmix(base);
    for &i in indices {
        h = splitmix(h ^ splitmix(i.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub sigma2_h_sim: Vec<f64>,
    /// Deconvolution kernel widths; `None` deconvolves with the simulation width.
    pub sigma2_h_deconv: Option<Vec<f64>>,
    pub sigma2_n: Vec<f64>,
    /// Noise realizations per cell.
    pub n_seeds: usize,
    pub base_seed: u64,
    pub solvers: Vec<Solver>,
    pub covariance: CovarianceParams,
    pub jitter: f64,
    pub sigma2_c: f64,
    pub extraction: Extraction,
    pub blur_normalization: BlurNormalization,
    pub settings: SolverSettings,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            sigma2_h_sim: vec![10.0],
            sigma2_h_deconv: None,
            sigma2_n: vec![10.0],
            n_seeds: 1,
            base_seed: 0,
            solvers: vec![Solver::Vb],
            covariance: CovarianceParams::new(8.0, 1.0).unwrap(),
            jitter: DEFAULT_JITTER,
            sigma2_c: 2.0,
            extraction: Extraction::default(),
            blur_normalization: BlurNormalization::default(),
            settings: SolverSettings { admm_lambda_sweep: true, ..Default::default() },
            jobs: 1,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sigma2_h_sim.is_empty() || self.sigma2_n.is_empty() || self.solvers.is_empty() {
            return Err(Error::param("sweep grids and solver list must be non-empty"));
        }
        if self.sigma2_h_deconv.as_ref().is_some_and(|v| v.is_empty()) {
            return Err(Error::param("deconvolution width list is empty"));
        }
        if self.n_seeds == 0 {
            return Err(Error::param("n_seeds must be >= 1"));
        }
        Ok(())
    }

    pub fn sim_config(&self, sigma2_h: f64, sigma2_n: f64, seed: u64) -> SimConfig {
        SimConfig {
            sigma2_h,
            sigma2_c: self.sigma2_c,
            sigma2_n,
            rng_seed: seed,
            extraction: self.extraction,
            blur_normalization: self.blur_normalization,
        }
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma2_h_sim: f64,
    pub sigma2_h_deconv: f64,
    pub sigma2_n: f64,
    pub seed: u64,
    pub rmse_before: f64,
    pub rmse_after: Option<f64>,
    pub solver: Solver,
    pub wall_time_s: f64,
    pub status: String,
}

/// Simulates every `(σ²_H sim, σ²_N, seed)` acquisition once and deconvolves
/// it with every requested kernel width and solver. A failing solver is
/// recorded in the row's `status` and the sweep continues.
///
/// Rows are ordered by simulation width, deconvolution width, noise level,
/// seed index and solver, independently of `jobs`.
pub fn sweep_experiment(reference: &Image, cores: &CoreMap, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let x_true = subsample_reference(reference, cores)?;
    let cov = build_covariance(cores, spec.covariance, spec.jitter)?;
    let deconv = spec.sigma2_h_deconv.clone();
    let n_deconv = deconv.as_ref().map_or(1, |v| v.len());

    let mut tasks = Vec::new();
    for ih in 0..spec.sigma2_h_sim.len() {
        for inoise in 0..spec.sigma2_n.len() {
            for rep in 0..spec.n_seeds {
                tasks.push((ih, inoise, rep));
            }
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<Vec<SweepRow>>>>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    let worker = || loop {
        let t = next.fetch_add(1, Ordering::SeqCst);
        if t >= tasks.len() {
            break;
        }
        let (ih, inoise, rep) = tasks[t];
        let out = run_task(cores, &x_true, &cov, spec, ih, inoise, rep);
        results.lock().unwrap()[t] = Some(out);
    };
    let jobs = spec.jobs.clamp(1, tasks.len());
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let results = results.into_inner().unwrap();

    // task results are indexed [deconv width][seed/solver]; regroup in row order
    let mut per_task = Vec::with_capacity(tasks.len());
    for r in results {
        per_task.push(r.expect("every task runs")?);
    }
    let mut rows = Vec::new();
    for ih in 0..spec.sigma2_h_sim.len() {
        for id in 0..n_deconv {
            for inoise in 0..spec.sigma2_n.len() {
                for rep in 0..spec.n_seeds {
                    let t = (ih * spec.sigma2_n.len() + inoise) * spec.n_seeds + rep;
                    rows.extend(per_task[t][id].iter().cloned());
                }
            }
        }
    }
    Ok(rows)
}

fn run_task(
    cores: &CoreMap,
    x_true: &IntensityField,
    cov: &SpatialCovariance,
    spec: &SweepSpec,
    ih: usize,
    inoise: usize,
    rep: usize,
) -> Result<Vec<Vec<SweepRow>>> {
    let sigma2_h_sim = spec.sigma2_h_sim[ih];
    let sigma2_n = spec.sigma2_n[inoise];
    let seed = cell_seed(spec.base_seed, &[ih as u64, inoise as u64, rep as u64]);
    let sim = simulate_system_image(x_true, cores, &spec.sim_config(sigma2_h_sim, sigma2_n, seed))?;
    let rmse_before = rmse(x_true, &sim.y)?;
    let widths = spec.sigma2_h_deconv.clone().unwrap_or_else(|| vec![sigma2_h_sim]);
    let mut settings = spec.settings.clone();
    settings.gibbs.rng_seed = seed;
    let mut out = Vec::with_capacity(widths.len());
    for &w in &widths {
        let mut rows = Vec::with_capacity(spec.solvers.len());
        let problem = build_coupling_kernel(cores, KernelParams::gaussian(w))
            .and_then(|k| DeconvProblem::new(sim.y.clone(), k, cov.clone()));
        for &solver in &spec.solvers {
            let start = Instant::now();
            let res = problem
                .as_ref()
                .map_err(|e| Error::Parameter(e.to_string()))
                .and_then(|p| solve(p, solver, &settings, Some(x_true)));
            let (rmse_after, wall, status) = match res {
                Ok(r) => (Some(rmse(x_true, &r.x)?), r.wall_time_s, "ok".to_string()),
                Err(e) => (None, start.elapsed().as_secs_f64(), format!("error: {e}")),
            };
            if let Some(r) = rmse_after {
                log::info!("σ²_H {sigma2_h_sim}/{w} σ²_N {sigma2_n} seed {seed} {solver}: {rmse_before:.3} -> {r:.3}");
            }
            rows.push(SweepRow {
                sigma2_h_sim,
                sigma2_h_deconv: w,
                sigma2_n,
                seed,
                rmse_before,
                rmse_after,
                solver,
                wall_time_s: wall,
                status,
            });
        }
        out.push(rows);
    }
    Ok(out)
}

/// Draws one zero-mean field from `N(0, γ² Δ)`; used for calibration tests
/// and examples.
pub fn sample_prior_field(cov: &SpatialCovariance, gamma2: f64, seed: u64) -> IntensityField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cov.len();
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let l = cov.factor().lower();
    let sd = gamma2.sqrt();
    (0..n).map(|i| sd * (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>()).collect()
}
