//! Solver-independent result type and the shared data-driven initialization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::admm::{lambda_sweep, run_admm, AdmmConfig};
use crate::error::{Error, Result};
use crate::mcmc::{run_gibbs, GibbsConfig};
use crate::model::{DeconvProblem, Hyperparams, IntensityField, PosteriorPoint};
use crate::vb::{run_vb, VbConfig};

/// The three estimators offered by the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Mcmc,
    Vb,
    Admm,
}

impl Solver {
    pub const ALL: [Solver; 3] = [Solver::Mcmc, Solver::Vb, Solver::Admm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Solver::Mcmc => "mcmc",
            Solver::Vb => "vb",
            Solver::Admm => "admm",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcmc" | "gibbs" => Ok(Solver::Mcmc),
            "vb" => Ok(Solver::Vb),
            "admm" => Ok(Solver::Admm),
            other => Err(Error::param(format!("unknown method '{other}' (expected mcmc, vb or admm)"))),
        }
    }
}

/// Restored intensities and whatever scalar estimates the solver produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub solver: Solver,
    pub x: IntensityField,
    pub sigma2: Option<f64>,
    pub gamma2: Option<f64>,
    pub beta: Option<f64>,
    /// Regularization used (ADMM only).
    pub lambda: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

/// Everything the three solvers need besides the problem itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub hyper: Hyperparams,
    pub gibbs: GibbsConfig,
    pub vb: VbConfig,
    pub admm: AdmmConfig,
    /// Run ADMM over the λ grid instead of the single `admm.lambda`.
    pub admm_lambda_sweep: bool,
}

/// Runs one solver.
///
/// With `admm_lambda_sweep`, the reported λ is the grid value with the lowest
/// RMSE against `x_true` when it is given. Without ground truth the grid value
/// whose mean squared residual is closest to the initial noise estimate is
/// taken (discrepancy principle). The reported wall time covers the whole
/// sweep.
pub fn solve(
    problem: &DeconvProblem,
    solver: Solver,
    settings: &SolverSettings,
    x_true: Option<&[f64]>,
) -> Result<EstimateResult> {
    match solver {
        Solver::Mcmc => Ok(run_gibbs(problem, &settings.hyper, &settings.gibbs)?.0),
        Solver::Vb => Ok(run_vb(problem, &settings.hyper, &settings.vb)?.0),
        Solver::Admm if !settings.admm_lambda_sweep => Ok(run_admm(problem, &settings.admm)?.0),
        Solver::Admm => {
            let sweep = lambda_sweep(problem, x_true, &settings.admm)?;
            let idx = match sweep.best {
                Some(i) => i,
                None => {
                    let target = data_driven_init(problem, &settings.hyper).sigma2;
                    let n = problem.len() as f64;
                    let gap = |x: &[f64]| (problem.residual_sq(x) / n - target).abs();
                    (0..sweep.entries.len())
                        .min_by(|&a, &b| {
                            gap(&sweep.entries[a].result.x).total_cmp(&gap(&sweep.entries[b].result.x))
                        })
                        .unwrap_or(0)
                }
            };
            let mut best = sweep.entries[idx].result.clone();
            best.wall_time_s = sweep.wall_time_s;
            Ok(best)
        }
    }
}

/// Number of nearest cores averaged by the initialization smoother, the
/// hexagonal analogue of a 3×3 window.
const INIT_NEIGHBOURS: usize = 6;

/// Starting point shared by the Gibbs sampler and variational Bayes.
///
/// * `x⁰ = max(y, 0)` divided by the row sums of `H` (a no-op for
///   row-normalized kernels), so that `H x⁰` is of the order of `y`
/// * `σ²⁰ = var(y) − var(smoothed y)`, floored at 1e-6, where the smoother
///   averages each core with its six nearest neighbours
/// * `γ²⁰ = var(x⁰)` (floored likewise)
/// * `β⁰ = σ²⁰ (α − 1)`, so the IG prior mean on `σ²` equals `σ²⁰`
pub fn data_driven_init(problem: &DeconvProblem, hyper: &Hyperparams) -> PosteriorPoint {
    let y = problem.y();
    let rows = problem.kernel().matrix().row_sums();
    let x0: IntensityField = y
        .iter()
        .zip(&rows)
        .map(|(v, r)| if *r > 0.0 { v.max(0.0) / r } else { v.max(0.0) })
        .collect();
    let smoothed = neighbour_smooth(problem);
    let sigma2 = (y.variance() - smoothed.variance()).max(1e-6);
    let gamma2 = x0.variance().max(1e-6);
    let beta = sigma2 * (hyper.alpha - 1.0).max(1e-6);
    PosteriorPoint { x: x0, sigma2, gamma2, beta }
}

/// Neighbours are ranked by prior correlation, which decreases with distance,
/// so no geometry beyond `Δ` is needed.
fn neighbour_smooth(problem: &DeconvProblem) -> IntensityField {
    let y = problem.y();
    let delta = problem.covariance().matrix();
    let n = y.len();
    let k = INIT_NEIGHBOURS.min(n.saturating_sub(1));
    (0..n)
        .map(|i| {
            let mut row: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (delta[(i, j)], j)).collect();
            let by_corr = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
            if k > 0 && k < row.len() {
                row.select_nth_unstable_by(k - 1, by_corr);
            }
            let sum: f64 = row.iter().take(k).map(|&(_, j)| y[j]).sum::<f64>() + y[i];
            sum / (k + 1) as f64
        })
        .collect()
}
