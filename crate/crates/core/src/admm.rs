//! MAP estimation by ADMM for
//!
//! ```text
//! minimize ½‖Hx − y‖² + (λ/2) xᵀΔ⁻¹x   subject to x ≥ 0
//! ```
//!
//! split as `x = u` with `u` carrying the nonnegativity constraint. The
//! x-step matrix `HᵀH + λΔ⁻¹ + μI` is factorized once per run.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{EstimateResult, Solver};
use crate::linalg::{norm2, trace, DenseMatrix, SpdFactor};
use crate::model::{DeconvProblem, IntensityField};
use crate::synth::rmse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// Regularization weight, the ratio σ²/γ².
    pub lambda: f64,
    /// Augmented-Lagrangian penalty.
    pub mu: f64,
    pub max_iters: usize,
    /// Stopping threshold on `‖u − x‖` is `sqrt(N) * epsilon_scale`.
    pub epsilon_scale: f64,
    /// Values tried by [`lambda_sweep`]; `None` uses [`default_lambda_grid`].
    pub lambda_grid: Option<Vec<f64>>,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig { lambda: 1.0, mu: 1.0, max_iters: 2000, epsilon_scale: 1e-5, lambda_grid: None }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::param("mu must be > 0"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda must be >= 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be >= 1"));
        }
        if !(self.epsilon_scale > 0.0) {
            return Err(Error::param("epsilon_scale must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub d1: Vec<f64>,
    /// `‖u − x‖` after the last iteration.
    pub primal_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Projection step: `max(x − d₁, 0)`.
pub fn admm_u_update(x: &[f64], d1: &[f64]) -> Vec<f64> {
    x.iter().zip(d1).map(|(a, b)| (a - b).max(0.0)).collect()
}

/// The constant x-step system `HᵀH + λΔ⁻¹ + μI`, factorized.
#[derive(Debug, Clone)]
pub struct XStepSystem {
    factor: SpdFactor,
    mu: f64,
}

impl XStepSystem {
    pub fn new(problem: &DeconvProblem, lambda: f64, mu: f64) -> Result<Self> {
        let m = system_matrix(problem, lambda, mu);
        let factor = SpdFactor::new(m.as_ref())
            .map_err(|_| Error::numerical("ADMM x-step matrix is not positive definite"))?;
        Ok(XStepSystem { factor, mu })
    }

    /// `(HᵀH + λΔ⁻¹ + μI)⁻¹ [Hᵀy + μ(u + d₁)]`.
    pub fn solve(&self, problem: &DeconvProblem, u: &[f64], d1: &[f64]) -> Vec<f64> {
        let rhs = x_step_rhs(problem, u, d1, self.mu);
        self.factor.solve(&rhs)
    }
}

pub fn system_matrix(problem: &DeconvProblem, lambda: f64, mu: f64) -> DenseMatrix<f64> {
    let a = problem.gram();
    let b = problem.covariance().inverse();
    DenseMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
        a[(i, j)] + lambda * b[(i, j)] + if i == j { mu } else { 0.0 }
    })
}

pub fn x_step_rhs(problem: &DeconvProblem, u: &[f64], d1: &[f64], mu: f64) -> Vec<f64> {
    problem.hty().iter().zip(u.iter().zip(d1)).map(|(h, (u, d))| h + mu * (u + d)).collect()
}

/// Single x-step; factorizes on every call. [`run_admm`] reuses one
/// [`XStepSystem`] instead.
pub fn admm_x_update(
    problem: &DeconvProblem,
    u: &[f64],
    d1: &[f64],
    config: &AdmmConfig,
) -> Result<IntensityField> {
    config.validate()?;
    Error::check_len(problem.len(), u.len())?;
    Error::check_len(problem.len(), d1.len())?;
    let sys = XStepSystem::new(problem, config.lambda, config.mu)?;
    Ok(IntensityField::new(sys.solve(problem, u, d1)))
}

/// `½‖Hx − y‖² + (λ/2) xᵀΔ⁻¹x`.
pub fn qp_objective(problem: &DeconvProblem, lambda: f64, x: &[f64]) -> f64 {
    0.5 * problem.residual_sq(x) + 0.5 * lambda * problem.covariance().quad_form_inv(x)
}

/// Runs ADMM from `x⁰ = u⁰ = max(y, 0)`, `d₁⁰ = 0`. The returned estimate
/// is the feasible iterate `u`.
pub fn run_admm(problem: &DeconvProblem, config: &AdmmConfig) -> Result<(EstimateResult, AdmmState)> {
    run_admm_with(problem, config, |_| {})
}

/// As [`run_admm`], calling `observe` after every iteration.
pub fn run_admm_with<F: FnMut(&AdmmState)>(
    problem: &DeconvProblem,
    config: &AdmmConfig,
    mut observe: F,
) -> Result<(EstimateResult, AdmmState)> {
    config.validate()?;
    let start = Instant::now();
    let sys = XStepSystem::new(problem, config.lambda, config.mu)?;
    let eps = (problem.len() as f64).sqrt() * config.epsilon_scale;
    let x0: Vec<f64> = problem.y().iter().map(|v| v.max(0.0)).collect();
    let mut state = AdmmState {
        u: x0.clone(),
        x: x0,
        d1: vec![0.0; problem.len()],
        primal_residual: f64::INFINITY,
        iterations: 0,
        converged: false,
    };
    while state.iterations < config.max_iters {
        state.u = admm_u_update(&state.x, &state.d1);
        state.x = sys.solve(problem, &state.u, &state.d1);
        for ((d, x), u) in state.d1.iter_mut().zip(&state.x).zip(&state.u) {
            *d -= x - u;
        }
        let diff: Vec<f64> = state.u.iter().zip(&state.x).map(|(u, x)| u - x).collect();
        state.primal_residual = norm2(&diff);
        state.iterations += 1;
        observe(&state);
        if !state.primal_residual.is_finite() {
            return Err(Error::numerical("ADMM diverged"));
        }
        if state.primal_residual <= eps {
            state.converged = true;
            break;
        }
    }
    if !state.converged {
        log::warn!(
            "ADMM stopped after {} iterations with ‖u − x‖ = {:.3e} > {:.3e}",
            state.iterations,
            state.primal_residual,
            eps
        );
    }
    let result = EstimateResult {
        solver: Solver::Admm,
        x: IntensityField::new(state.u.clone()),
        sigma2: None,
        gamma2: None,
        beta: None,
        lambda: Some(config.lambda),
        iterations: state.iterations,
        converged: state.converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((result, state))
}

/// Five log-spaced values over `[1e-2, 1e2] · tr(HᵀH) / tr(Δ⁻¹)`.
pub fn default_lambda_grid(problem: &DeconvProblem) -> Vec<f64> {
    let scale = trace(problem.gram()) / trace(problem.covariance().inverse());
    (0..5).map(|k| scale * 10f64.powf(-2.0 + k as f64)).collect()
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub lambda: f64,
    pub result: EstimateResult,
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LambdaSweep {
    pub entries: Vec<SweepEntry>,
    /// Index of the lowest-RMSE entry when ground truth was supplied.
    pub best: Option<usize>,
    pub wall_time_s: f64,
}

impl LambdaSweep {
    pub fn best_entry(&self) -> Option<&SweepEntry> {
        self.best.map(|i| &self.entries[i])
    }
}

/// Independent ADMM runs over the λ grid. With `x_true`, the entry with the
/// lowest RMSE is flagged; ties go to the smaller λ so the choice does not
/// depend on grid order.
pub fn lambda_sweep(
    problem: &DeconvProblem,
    x_true: Option<&[f64]>,
    config: &AdmmConfig,
) -> Result<LambdaSweep> {
    let start = Instant::now();
    let grid = config.lambda_grid.clone().unwrap_or_else(|| default_lambda_grid(problem));
    if grid.is_empty() {
        return Err(Error::param("lambda grid is empty"));
    }
    if let Some(t) = x_true {
        Error::check_len(problem.len(), t.len())?;
    }
    let mut entries = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        let cfg = AdmmConfig { lambda, lambda_grid: None, ..config.clone() };
        let (result, _) = run_admm(problem, &cfg)?;
        let rmse = x_true.map(|t| rmse(t, &result.x)).transpose()?;
        entries.push(SweepEntry { lambda, result, rmse });
    }
    let best = x_true.and(
        entries
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let (ra, rb) = (a.rmse.unwrap_or(f64::INFINITY), b.rmse.unwrap_or(f64::INFINITY));
                ra.total_cmp(&rb).then(a.lambda.total_cmp(&b.lambda))
            })
            .map(|(i, _)| i),
    );
    Ok(LambdaSweep { entries, best, wall_time_s: start.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dense_matvec, CsrMatrix};
    use crate::model::{CouplingKernel, CovarianceParams, KernelParams, SpatialCovariance};

    fn problem(h: DenseMatrix<f64>, delta: DenseMatrix<f64>, y: Vec<f64>) -> DeconvProblem {
        let kernel = CouplingKernel::from_matrix(CsrMatrix::from_dense(&h), KernelParams::default()).unwrap();
        let cov = SpatialCovariance::from_matrix(delta, CovarianceParams::new(1.0, 1.0).unwrap()).unwrap();
        DeconvProblem::new(IntensityField::new(y), kernel, cov).unwrap()
    }

    fn eye(n: usize) -> DenseMatrix<f64> {
        DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn projection_step() {
        assert_eq!(admm_u_update(&[-1.0, -2.0], &[0.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(admm_u_update(&[2.0, -1.0, 0.0], &[0.0; 3]), vec![2.0, 0.0, 0.0]);
        let once = admm_u_update(&[1.5, -0.5, 3.0], &[0.0; 3]);
        assert_eq!(admm_u_update(&once, &[0.0; 3]), once);
    }

    #[test]
    fn x_step_limits_and_residual() {
        let p = problem(eye(3), eye(3), vec![1.0, -2.0, 3.0]);
        let cfg = AdmmConfig { lambda: 0.0, mu: 1e-12, ..Default::default() };
        let x = admm_x_update(&p, &[0.0; 3], &[0.0; 3], &cfg).unwrap();
        for (a, b) in x.iter().zip([1.0, -2.0, 3.0]) {
            assert!((a - b).abs() < 1e-10);
        }

        let h = DenseMatrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.5 });
        let d = DenseMatrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.3 });
        let p = problem(h, d, vec![2.0, 1.0]);
        let cfg = AdmmConfig { lambda: 0.7, mu: 1.3, ..Default::default() };
        let (u, d1) = ([0.5, 0.2], [0.1, -0.3]);
        let x = admm_x_update(&p, &u, &d1, &cfg).unwrap();
        let m = system_matrix(&p, 0.7, 1.3);
        let rhs = x_step_rhs(&p, &u, &d1, 1.3);
        let mx = dense_matvec(&m, &x);
        let res: Vec<f64> = mx.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        assert!(norm2(&res) <= 1e-10 * norm2(&rhs));
        // 2×2 Cramer's rule
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let x0 = (rhs[0] * m[(1, 1)] - m[(0, 1)] * rhs[1]) / det;
        let x1 = (m[(0, 0)] * rhs[1] - m[(1, 0)] * rhs[0]) / det;
        assert!((x[0] - x0).abs() < 1e-12 && (x[1] - x1).abs() < 1e-12);
    }

    #[test]
    fn identity_without_regularization_projects_data() {
        let y = vec![3.0, -1.0, 0.5, -7.0];
        let p = problem(eye(4), eye(4), y.clone());
        let cfg = AdmmConfig { lambda: 0.0, ..Default::default() };
        let (res, state) = run_admm(&p, &cfg).unwrap();
        assert!(state.converged);
        for (a, b) in res.x.iter().zip(&y) {
            assert!((a - b.max(0.0)).abs() < 1e-4);
        }
        assert!(res.x.is_nonnegative());
    }

    #[test]
    fn dual_update_is_exact() {
        let h = DenseMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.2 });
        let p = problem(h, eye(3), vec![1.0, -1.0, 2.0]);
        let cfg = AdmmConfig { lambda: 0.5, max_iters: 50, ..Default::default() };
        let mut prev_d = vec![0.0; 3];
        run_admm_with(&p, &cfg, |s| {
            let expected: Vec<f64> =
                prev_d.iter().zip(s.x.iter().zip(&s.u)).map(|(d, (x, u))| d - (x - u)).collect();
            assert_eq!(s.d1, expected);
            assert!(s.u.iter().all(|&v| v >= 0.0));
            prev_d = s.d1.clone();
        })
        .unwrap();
    }

    #[test]
    fn sweep_selection() {
        let h = DenseMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.3 });
        let truth = [2.0, 0.0, 1.0];
        let y: Vec<f64> = (0..3).map(|i| (0..3).map(|j| h[(i, j)] * truth[j]).sum::<f64>() + 0.1).collect();
        let p = problem(h, eye(3), y);
        let grid = vec![0.01, 0.1, 1.0, 10.0];
        let cfg = AdmmConfig { lambda_grid: Some(grid.clone()), ..Default::default() };
        let sweep = lambda_sweep(&p, Some(&truth), &cfg).unwrap();
        let best = sweep.best_entry().unwrap();
        for e in &sweep.entries {
            assert!(best.rmse.unwrap() <= e.rmse.unwrap());
        }
        let mut rev = grid.clone();
        rev.reverse();
        let cfg_rev = AdmmConfig { lambda_grid: Some(rev), ..Default::default() };
        let sweep_rev = lambda_sweep(&p, Some(&truth), &cfg_rev).unwrap();
        assert_eq!(sweep_rev.best_entry().unwrap().lambda, best.lambda);

        let single = AdmmConfig { lambda_grid: Some(vec![0.1]), ..Default::default() };
        let s = lambda_sweep(&p, None, &single).unwrap();
        let (direct, _) = run_admm(&p, &AdmmConfig { lambda: 0.1, ..Default::default() }).unwrap();
        assert_eq!(s.entries[0].result.x, direct.x);
        assert!(s.best.is_none());

        let empty = AdmmConfig { lambda_grid: Some(vec![]), ..Default::default() };
        assert!(lambda_sweep(&p, None, &empty).is_err());
    }

    #[test]
    fn invalid_config() {
        let p = problem(eye(1), eye(1), vec![1.0]);
        assert!(run_admm(&p, &AdmmConfig { mu: 0.0, ..Default::default() }).is_err());
        assert!(run_admm(&p, &AdmmConfig { lambda: -1.0, ..Default::default() }).is_err());
    }
}
