//! Command-line front end: `simulate`, `calibrate`, `deconvolve`,
//! `interpolate` and `sweep`.
//!
//! Every command accepts `--config FILE`, a JSON object whose keys are the
//! long option names in snake_case. A `manifest.json` written by an earlier
//! run is accepted as well. Flags given on the command line win over the file.
//! Each command writes `manifest.json` next to its outputs with the merged
//! options and every default filled in, including the seed drawn when none
//! was given, so `--config manifest.json` reproduces the run.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::calib::{detect_cores_with, fit_covariance_params, CovarianceFit, CovarianceGrid, DetectConfig};
use crate::error::{Error, Result};
use crate::estimate::{solve, Solver, SolverSettings};
use crate::gp::{uncertainty_to_confidence, GpInterpolator};
use crate::io::{
    bounding_size, read_field_csv, read_json, read_pgm, read_points_csv, write_cores_csv, write_field_csv,
    write_json, write_pgm_preview, write_raw_f64, write_records_csv, Image,
};
use crate::mcmc::XSampler;
use crate::model::{
    build_coupling_kernel, build_covariance, CoreMap, CovarianceParams, DeconvProblem, KernelParams,
    DEFAULT_JITTER,
};
use crate::synth::{
    extract, phantom, simulate_system_image, subsample_reference, sweep_experiment, BlurNormalization, Extraction,
    SimConfig, SweepSpec,
};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "fiberdeconv", version, about = "Bayesian restoration of fiber-bundle endomicroscopy images")]
pub struct Cli {
    /// JSON file with option values; a manifest from an earlier run works too.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a fiber-bundle acquisition of a reference image.
    Simulate(SimulateArgs),
    /// Estimate the true core intensities from core observations.
    Deconvolve(DeconvolveArgs),
    /// Interpolate core intensities onto the pixel grid with uncertainty.
    Interpolate(InterpolateArgs),
    /// Detect cores on a background image and fit the prior covariance.
    Calibrate(CalibrateArgs),
    /// Run a grid of simulate + deconvolve experiments.
    Sweep(SweepArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Deconvolve(_) => "deconvolve",
            Command::Interpolate(_) => "interpolate",
            Command::Calibrate(_) => "calibrate",
            Command::Sweep(_) => "sweep",
        }
    }
}

/// Where the reference image comes from.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageSource {
    /// Reference image (binary PGM).
    #[arg(long = "ref", value_name = "PGM")]
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    /// Use the built-in synthetic phantom instead of --ref.
    #[arg(long)]
    pub phantom: bool,
    /// Phantom width in pixels [default: 128].
    #[arg(long)]
    pub width: Option<usize>,
    /// Phantom height in pixels [default: 128].
    #[arg(long)]
    pub height: Option<usize>,
    /// Phantom layout seed [default: 0].
    #[arg(long)]
    pub phantom_seed: Option<u64>,
}

impl ImageSource {
    fn resolve(&mut self) -> Result<()> {
        if self.reference.is_none() {
            if !self.phantom {
                return Err(Error::param("no reference image: give --ref or --phantom"));
            }
            self.width.get_or_insert(128);
            self.height.get_or_insert(128);
            self.phantom_seed.get_or_insert(0);
        }
        Ok(())
    }

    fn load(&self) -> Result<Image> {
        match &self.reference {
            Some(p) => read_pgm(p),
            None => Ok(phantom(req(self.width, "width")?, req(self.height, "height")?, req(self.phantom_seed, "phantom_seed")?)),
        }
    }
}

/// Where the core positions come from.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct CoreSource {
    /// Core map CSV with header `x,y`.
    #[arg(long, value_name = "CSV")]
    pub cores: Option<PathBuf>,
    /// Use a synthetic hexagonal lattice instead of --cores.
    #[arg(long)]
    pub hex_lattice: bool,
    /// Lattice spacing in pixels [default: 3.3].
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Distance kept from the image border [default: 2].
    #[arg(long)]
    pub margin: Option<f64>,
    /// Uniform position jitter in pixels [default: 0].
    #[arg(long)]
    pub lattice_jitter: Option<f64>,
}

impl CoreSource {
    fn resolve(&mut self) -> Result<()> {
        if self.cores.is_none() {
            if !self.hex_lattice {
                return Err(Error::param("no core map: give --cores or --hex-lattice"));
            }
            self.spacing.get_or_insert(3.3);
            self.margin.get_or_insert(2.0);
            self.lattice_jitter.get_or_insert(0.0);
        }
        Ok(())
    }

    fn load(&self, width: usize, height: usize, seed: u64) -> Result<CoreMap> {
        match &self.cores {
            Some(p) => CoreMap::new(width, height, read_points_csv(p)?),
            None => CoreMap::hex_lattice(
                width,
                height,
                req(self.spacing, "spacing")?,
                req(self.margin, "margin")?,
                req(self.lattice_jitter, "lattice_jitter")?,
                seed,
            ),
        }
    }
}

/// Prior covariance `Δ` given directly or by a calibration file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorArgs {
    /// Correlation length ℓ in pixels.
    #[arg(long)]
    pub ell: Option<f64>,
    /// Correlation exponent κ in (0, 2].
    #[arg(long)]
    pub kappa: Option<f64>,
    /// `covariance.json` written by `calibrate`; --ell/--kappa take precedence.
    #[arg(long, value_name = "JSON")]
    pub covariance: Option<PathBuf>,
    /// Diagonal jitter added to Δ [default: 1e-8].
    #[arg(long)]
    pub jitter: Option<f64>,
}

impl PriorArgs {
    fn resolve(&mut self) -> Result<CovarianceParams> {
        if self.ell.is_none() || self.kappa.is_none() {
            if let Some(p) = &self.covariance {
                let fit: CovarianceFit = read_json(p)?;
                self.ell.get_or_insert(fit.params.length_scale);
                self.kappa.get_or_insert(fit.params.exponent);
            }
        }
        self.jitter.get_or_insert(DEFAULT_JITTER);
        match (self.ell, self.kappa) {
            (Some(l), Some(k)) => CovarianceParams::new(l, k),
            _ => Err(Error::param("prior covariance unknown: give --ell and --kappa, or --covariance")),
        }
    }
}

/// Solver knobs shared by `deconvolve` and `sweep`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverArgs {
    /// MCMC iterations including burn-in [default: 1500].
    #[arg(long)]
    pub n_mc: Option<usize>,
    /// MCMC burn-in [default: 500].
    #[arg(long)]
    pub n_bi: Option<usize>,
    /// MCMC x-update: coordinate_gibbs or exact_hmc [default: coordinate_gibbs].
    #[arg(long)]
    pub sampler: Option<String>,
    /// Use the σ² update without the ½ residual factor in VB.
    #[arg(long)]
    pub vb_full_residual: bool,
    /// ADMM regularization λ when not sweeping [default: 1].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// ADMM penalty μ [default: 1].
    #[arg(long)]
    pub mu: Option<f64>,
}

impl SolverArgs {
    fn resolve(&mut self) -> Result<SolverSettings> {
        let mut s = SolverSettings::default();
        s.gibbs.n_mc = *self.n_mc.get_or_insert(s.gibbs.n_mc);
        s.gibbs.n_bi = *self.n_bi.get_or_insert(s.gibbs.n_bi);
        let sampler = self.sampler.get_or_insert_with(|| enum_name(&XSampler::default()));
        s.gibbs.x_sampler = parse_enum(sampler, "sampler")?;
        s.vb.half_residual_factor = !self.vb_full_residual;
        s.admm.lambda = *self.lambda.get_or_insert(s.admm.lambda);
        s.admm.mu = *self.mu.get_or_insert(s.admm.mu);
        s.gibbs.validate()?;
        s.admm.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub image: ImageSource,
    #[command(flatten)]
    #[serde(flatten)]
    pub core_map: CoreSource,
    /// Coupling kernel variance σ²_H [default: 10].
    #[arg(long)]
    pub sigma2_h: Option<f64>,
    /// Optical blur variance σ²_C [default: 2].
    #[arg(long)]
    pub sigma2_c: Option<f64>,
    /// Pixel noise variance σ²_N [default: 10].
    #[arg(long)]
    pub sigma2_n: Option<f64>,
    /// core_max or core_value [default: core_max].
    #[arg(long)]
    pub extraction: Option<String>,
    /// Blur scaling: peak or sum [default: peak].
    #[arg(long)]
    pub blur_normalization: Option<String>,
    /// Seed for noise and lattice jitter; drawn at random when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DeconvolveArgs {
    /// Core observations CSV (header `value`).
    #[arg(long, value_name = "CSV")]
    pub y: Option<PathBuf>,
    /// Core map CSV with header `x,y`.
    #[arg(long, value_name = "CSV")]
    pub cores: Option<PathBuf>,
    /// mcmc, vb or admm.
    #[arg(long)]
    pub method: Option<String>,
    /// Gaussian coupling variance σ²_H (synthetic data).
    #[arg(long)]
    pub sigma2_h: Option<f64>,
    /// Coupling width α_H in pixels [default: 4].
    #[arg(long)]
    pub alpha_h: Option<f64>,
    /// Coupling shape β_H [default: 0.8].
    #[arg(long)]
    pub beta_h: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    /// Run ADMM over five λ values and keep the best one.
    #[arg(long)]
    pub lambda_sweep: bool,
    /// Ground truth used to pick λ in a sweep; otherwise the residual is
    /// matched to the estimated noise level.
    #[arg(long, value_name = "CSV")]
    pub x_true: Option<PathBuf>,
    /// Seed for the sampler; drawn at random when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpolateArgs {
    /// Restored core intensities CSV (header `value`).
    #[arg(long, value_name = "CSV")]
    pub x_hat: Option<PathBuf>,
    /// Core map CSV with header `x,y`.
    #[arg(long, value_name = "CSV")]
    pub cores: Option<PathBuf>,
    /// Output grid width [default: fits the cores].
    #[arg(long)]
    pub width: Option<usize>,
    /// Output grid height [default: fits the cores].
    #[arg(long)]
    pub height: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorArgs,
    /// Prior scale γ².
    #[arg(long)]
    pub gamma2: Option<f64>,
    /// `estimates.json` from `deconvolve`, used for γ² when --gamma2 is absent.
    #[arg(long, value_name = "JSON")]
    pub estimates: Option<PathBuf>,
    /// Also write the two-sided confidence half-width at this level.
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Evaluate at these points (CSV with header `x,y`) into points.csv.
    #[arg(long, value_name = "CSV")]
    pub points: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrateArgs {
    /// Background image (binary PGM) used to locate the cores.
    #[arg(long, value_name = "PGM")]
    pub background: Option<PathBuf>,
    /// Training images for the covariance fit; repeat the flag for several.
    /// Defaults to the background image.
    #[arg(long, value_name = "PGM")]
    pub train: Vec<PathBuf>,
    /// Minimum distance between detected cores [default: 2].
    #[arg(long)]
    pub min_separation: Option<f64>,
    /// Fraction of the image maximum a core must reach [default: 0.5].
    #[arg(long)]
    pub intensity_floor: Option<f64>,
    /// Background-removal scale of the detector; 0 disables it [default: 0.8].
    #[arg(long)]
    pub background_sigma: Option<f64>,
    /// Diagonal jitter added to Δ [default: 1e-8].
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub image: ImageSource,
    #[command(flatten)]
    #[serde(flatten)]
    pub core_map: CoreSource,
    /// Simulation kernel variances, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sigma2_h_sim: Vec<f64>,
    /// Deconvolution kernel variances; defaults to the simulation value.
    #[arg(long, value_delimiter = ',')]
    pub sigma2_h_deconv: Vec<f64>,
    /// Noise variances, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sigma2_n: Vec<f64>,
    /// Solvers, comma separated [default: vb].
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Noise realizations per cell [default: 1].
    #[arg(long)]
    pub n_seeds: Option<usize>,
    /// Optical blur variance σ²_C [default: 2].
    #[arg(long)]
    pub sigma2_c: Option<f64>,
    /// core_max or core_value [default: core_max].
    #[arg(long)]
    pub extraction: Option<String>,
    /// Blur scaling: peak or sum [default: peak].
    #[arg(long)]
    pub blur_normalization: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    /// Use the single --lambda for ADMM instead of the five-value sweep.
    #[arg(long)]
    pub no_lambda_sweep: bool,
    /// Worker threads; results do not depend on it [default: 1].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Base seed; drawn at random when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest<T> {
    command: String,
    version: String,
    args: T,
}

#[derive(Debug, Serialize)]
struct Estimates {
    solver: Solver,
    sigma2: Option<f64>,
    gamma2: Option<f64>,
    beta: Option<f64>,
    lambda: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    solver: Solver,
    n_cores: usize,
    iterations: usize,
    converged: bool,
}

#[derive(Debug, Serialize)]
struct Timing {
    wall_time_s: f64,
}

#[derive(Debug, Serialize)]
struct PointRow {
    x: f64,
    y: f64,
    mean: f64,
    variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    halfwidth: Option<f64>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code; errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let name = cli.command.name();
    let config = match &cli.config {
        Some(p) => Some(load_config(p, name)?),
        None => None,
    };
    let config = config.as_ref();
    match cli.command {
        Command::Simulate(a) => cmd_simulate(merge(&a, config)?),
        Command::Deconvolve(a) => cmd_deconvolve(merge(&a, config)?),
        Command::Interpolate(a) => cmd_interpolate(merge(&a, config)?),
        Command::Calibrate(a) => cmd_calibrate(merge(&a, config)?),
        Command::Sweep(a) => cmd_sweep(merge(&a, config)?),
    }
}

/// Reads a config file. A manifest is unwrapped to its `args` after checking
/// that it belongs to `command`.
fn load_config(path: &Path, command: &str) -> Result<Map<String, Value>> {
    let value: Value = read_json(path)?;
    let Value::Object(mut obj) = value else {
        return Err(Error::Format(format!("{}: config must be a JSON object", path.display())));
    };
    if let (Some(Value::String(c)), Some(Value::Object(_))) = (obj.get("command"), obj.get("args")) {
        if c != command {
            return Err(Error::param(format!("{} is a manifest for '{c}', not '{command}'", path.display())));
        }
        if let Some(Value::Object(args)) = obj.remove("args") {
            return Ok(args);
        }
    }
    Ok(obj)
}

/// Overlays the options given on the command line onto `config`. Unset
/// options, false switches and empty lists count as not given.
fn merge<T: Serialize + DeserializeOwned + Default>(cli: &T, config: Option<&Map<String, Value>>) -> Result<T> {
    let Value::Object(known) = serde_json::to_value(T::default())? else {
        unreachable!("argument structs serialize to objects")
    };
    let mut merged = config.cloned().unwrap_or_default();
    let unknown: BTreeSet<&String> = merged.keys().filter(|k| !known.contains_key(*k)).collect();
    if !unknown.is_empty() {
        let names: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
        return Err(Error::param(format!("unknown option(s) in config: {}", names.join(", "))));
    }
    if let Value::Object(given) = serde_json::to_value(cli)? {
        for (k, v) in given {
            let set = match &v {
                Value::Null => false,
                Value::Bool(b) => *b,
                Value::Array(a) => !a.is_empty(),
                _ => true,
            };
            if set {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::param(format!("bad option value: {e}")))
}

fn req<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::param(format!("missing --{}", name.replace('_', "-"))))
}

fn parse_enum<T: DeserializeOwned>(s: &str, what: &str) -> Result<T> {
    serde_json::from_value(Value::String(s.to_owned()))
        .map_err(|_| Error::param(format!("unknown {what} '{s}'")))
}

fn enum_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        _ => unreachable!("unit enums serialize to strings"),
    }
}

fn seed_or_random(seed: &mut Option<u64>) -> u64 {
    *seed.get_or_insert_with(rand::random)
}

fn prepare_out(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = req(out.clone(), "out")?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_manifest<T: Serialize>(dir: &Path, command: &str, args: &T) -> Result<()> {
    let m = Manifest { command: command.to_owned(), version: env!("CARGO_PKG_VERSION").to_owned(), args };
    write_json(dir.join(MANIFEST), &m)
}

fn read_cores(path: &Path) -> Result<CoreMap> {
    let points = read_points_csv(path)?;
    let (w, h) = bounding_size(&points);
    CoreMap::new(w, h, points)
}

fn cmd_simulate(mut a: SimulateArgs) -> Result<()> {
    a.image.resolve()?;
    a.core_map.resolve()?;
    let seed = seed_or_random(&mut a.seed);
    let extraction: Extraction =
        parse_enum(a.extraction.get_or_insert_with(|| enum_name(&Extraction::default())), "extraction")?;
    let blur: BlurNormalization = parse_enum(
        a.blur_normalization.get_or_insert_with(|| enum_name(&BlurNormalization::default())),
        "blur normalization",
    )?;
    let config = SimConfig {
        sigma2_h: *a.sigma2_h.get_or_insert(10.0),
        sigma2_c: *a.sigma2_c.get_or_insert(2.0),
        sigma2_n: *a.sigma2_n.get_or_insert(10.0),
        rng_seed: seed,
        extraction,
        blur_normalization: blur,
    };
    config.validate()?;
    let dir = prepare_out(&a.out)?;

    let reference = a.image.load()?;
    let cores = a.core_map.load(reference.width, reference.height, seed)?;
    let x_true = subsample_reference(&reference, &cores)?;
    let sim = simulate_system_image(&x_true, &cores, &config)?;

    write_pgm_preview(dir.join("g.pgm"), &sim.g)?;
    write_raw_f64(&dir, "g", &sim.g)?;
    write_field_csv(dir.join("y.csv"), &sim.y)?;
    write_field_csv(dir.join("x_true.csv"), &x_true)?;
    write_cores_csv(dir.join("cores.csv"), &cores)?;
    write_manifest(&dir, "simulate", &a)
}

fn cmd_deconvolve(mut a: DeconvolveArgs) -> Result<()> {
    let solver: Solver = req(a.method.clone(), "method")?.parse()?;
    let seed = seed_or_random(&mut a.seed);
    let kernel = match a.sigma2_h {
        Some(s) => {
            if a.alpha_h.is_some() || a.beta_h.is_some() {
                return Err(Error::param("give either --sigma2-h or --alpha-h/--beta-h, not both"));
            }
            KernelParams::gaussian(s)
        }
        None => {
            let d = KernelParams::default();
            KernelParams { alpha_h: *a.alpha_h.get_or_insert(d.alpha_h), beta_h: *a.beta_h.get_or_insert(d.beta_h), ..d }
        }
    };
    kernel.validate()?;
    let cov_params = a.prior.resolve()?;
    let mut settings = a.solver.resolve()?;
    settings.gibbs.rng_seed = seed;
    settings.admm_lambda_sweep = a.lambda_sweep;
    let dir = prepare_out(&a.out)?;

    let y = read_field_csv(req(a.y.clone(), "y")?)?;
    let cores = read_cores(&req(a.cores.clone(), "cores")?)?;
    Error::check_len(cores.len(), y.len())?;
    let x_true = match &a.x_true {
        Some(p) => Some(read_field_csv(p)?),
        None => None,
    };
    let h = build_coupling_kernel(&cores, kernel)?;
    let cov = build_covariance(&cores, cov_params, req(a.prior.jitter, "jitter")?)?;
    let problem = DeconvProblem::new(y, h, cov)?;
    let r = solve(&problem, solver, &settings, x_true.as_deref())?;

    write_field_csv(dir.join("x_hat.csv"), &r.x)?;
    write_json(
        dir.join("estimates.json"),
        &Estimates { solver, sigma2: r.sigma2, gamma2: r.gamma2, beta: r.beta, lambda: r.lambda },
    )?;
    write_json(
        dir.join("diagnostics.json"),
        &Diagnostics { solver, n_cores: cores.len(), iterations: r.iterations, converged: r.converged },
    )?;
    write_json(dir.join("timing.json"), &Timing { wall_time_s: r.wall_time_s })?;
    write_manifest(&dir, "deconvolve", &a)
}

fn cmd_interpolate(mut a: InterpolateArgs) -> Result<()> {
    let cov_params = a.prior.resolve()?;
    if a.gamma2.is_none() {
        if let Some(p) = &a.estimates {
            let v: Value = read_json(p)?;
            a.gamma2 = v.get("gamma2").and_then(Value::as_f64);
        }
    }
    let gamma2 = a
        .gamma2
        .ok_or_else(|| Error::param("γ² is required: give --gamma2 or --estimates from an MCMC/VB run"))?;
    if let Some(level) = a.confidence {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::param("--confidence must lie in (0, 1)"));
        }
    }
    let x_hat = read_field_csv(req(a.x_hat.clone(), "x_hat")?)?;
    let points = read_points_csv(req(a.cores.clone(), "cores")?)?;
    let (bw, bh) = bounding_size(&points);
    let width = *a.width.get_or_insert(bw);
    let height = *a.height.get_or_insert(bh);
    let cores = CoreMap::new(width, height, points)?;
    Error::check_len(cores.len(), x_hat.len())?;
    let dir = prepare_out(&a.out)?;

    let gp = GpInterpolator::new(&cores, &x_hat, gamma2, cov_params, req(a.prior.jitter, "jitter")?)?;
    let grid = gp.predict_grid(width, height);
    let bound = 1.0 / gamma2;
    if grid.variance.data.iter().any(|&v| !(v >= 0.0 && v <= bound * (1.0 + 1e-12))) {
        return Err(Error::numerical("predictive variance left [0, 1/γ²]"));
    }
    write_pgm_preview(dir.join("mean.pgm"), &grid.mean)?;
    write_raw_f64(&dir, "mean", &grid.mean)?;
    write_pgm_preview(dir.join("variance.pgm"), &grid.variance)?;
    write_raw_f64(&dir, "variance", &grid.variance)?;
    if let Some(level) = a.confidence {
        let hw = Image::new(width, height, uncertainty_to_confidence(&grid.variance.data, level)?)?;
        write_pgm_preview(dir.join("halfwidth.pgm"), &hw)?;
        write_raw_f64(&dir, "halfwidth", &hw)?;
    }
    if let Some(p) = &a.points {
        let targets = read_points_csv(p)?;
        let pred = gp.predict_points(&targets);
        let hw = match a.confidence {
            Some(level) => Some(uncertainty_to_confidence(&pred.variance, level)?),
            None => None,
        };
        let rows: Vec<PointRow> = targets
            .iter()
            .enumerate()
            .map(|(i, t)| PointRow {
                x: t[0],
                y: t[1],
                mean: pred.mean[i],
                variance: pred.variance[i],
                halfwidth: hw.as_ref().map(|h| h[i]),
            })
            .collect();
        write_records_csv(dir.join("points.csv"), &rows)?;
    }
    write_manifest(&dir, "interpolate", &a)
}

fn cmd_calibrate(mut a: CalibrateArgs) -> Result<()> {
    let defaults = DetectConfig::default();
    let sigma = *a.background_sigma.get_or_insert(defaults.background_sigma.unwrap_or(0.0));
    let detect = DetectConfig {
        min_separation: *a.min_separation.get_or_insert(defaults.min_separation),
        intensity_floor: *a.intensity_floor.get_or_insert(defaults.intensity_floor),
        background_sigma: (sigma > 0.0).then_some(sigma),
    };
    let jitter = *a.jitter.get_or_insert(DEFAULT_JITTER);
    let background_path = req(a.background.clone(), "background")?;
    if a.train.is_empty() {
        a.train.push(background_path.clone());
    }
    let background = read_pgm(&background_path)?;
    let training: Vec<Image> = a.train.iter().map(read_pgm).collect::<Result<_>>()?;
    for t in &training {
        if (t.width, t.height) != (background.width, background.height) {
            return Err(Error::param("training images must match the background image size"));
        }
    }
    let dir = prepare_out(&a.out)?;

    let cores = detect_cores_with(&background, &detect)?;
    let fields: Vec<Vec<f64>> =
        training.iter().map(|t| extract(t, &cores, Extraction::CoreValue, 0).to_vec()).collect();
    let fit = fit_covariance_params(&cores, &fields, &CovarianceGrid::default(), jitter)?;

    write_cores_csv(dir.join("cores.csv"), &cores)?;
    write_json(dir.join("covariance.json"), &fit)?;
    write_manifest(&dir, "calibrate", &a)
}

fn cmd_sweep(mut a: SweepArgs) -> Result<()> {
    if a.sigma2_h_sim.is_empty() || a.sigma2_n.is_empty() {
        return Err(Error::param("empty grid: give --sigma2-h-sim and --sigma2-n"));
    }
    if a.methods.is_empty() {
        a.methods.push(Solver::Vb.to_string());
    }
    let solvers: Vec<Solver> = a.methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    a.image.resolve()?;
    a.core_map.resolve()?;
    let seed = seed_or_random(&mut a.seed);
    let covariance = a.prior.resolve()?;
    let mut settings = a.solver.resolve()?;
    settings.admm_lambda_sweep = !a.no_lambda_sweep;
    let spec = SweepSpec {
        sigma2_h_sim: a.sigma2_h_sim.clone(),
        sigma2_h_deconv: (!a.sigma2_h_deconv.is_empty()).then(|| a.sigma2_h_deconv.clone()),
        sigma2_n: a.sigma2_n.clone(),
        n_seeds: *a.n_seeds.get_or_insert(1),
        base_seed: seed,
        solvers,
        covariance,
        jitter: req(a.prior.jitter, "jitter")?,
        sigma2_c: *a.sigma2_c.get_or_insert(2.0),
        extraction: parse_enum(a.extraction.get_or_insert_with(|| enum_name(&Extraction::default())), "extraction")?,
        blur_normalization: parse_enum(
            a.blur_normalization.get_or_insert_with(|| enum_name(&BlurNormalization::default())),
            "blur normalization",
        )?,
        settings,
        jobs: *a.jobs.get_or_insert(1),
    };
    spec.validate()?;
    let dir = prepare_out(&a.out)?;

    let reference = a.image.load()?;
    let cores = a.core_map.load(reference.width, reference.height, seed)?;
    let rows = sweep_experiment(&reference, &cores, &spec)?;
    write_records_csv(dir.join("results.csv"), &rows)?;
    write_manifest(&dir, "sweep", &a)?;
    if rows.iter().all(|r| r.rmse_after.is_none()) {
        return Err(Error::numerical("every sweep cell failed; see the status column of results.csv"));
    }
    Ok(())
}
