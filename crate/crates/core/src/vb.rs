//! Mean-field variational Bayes with `q(x) q(σ²) q(γ²) q(β)`.
//!
//! Positivity of `x` is relaxed, so `q(x)` is Gaussian. In the default
//! degenerate mode `q(x)` collapses to its mean and the update is a single
//! linear solve; the full mode also carries `cov(x)` and the trace terms it
//! contributes to the scalar updates.
//!
//! The plain cycle is a fixed-point map on `(E σ², E γ², E β)` that can
//! contract slowly when noise and prior scale are weakly identified. By
//! default the log scalar moments are extrapolated with SQUAREM between cycles;
//! the fixed point is the same and every cycle is still the plain update.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{data_driven_init, EstimateResult, Solver};
use crate::linalg::{dense_matvec, dot, norm2, DenseMatrix, SpdFactor};
use crate::mcmc::precision_matrix;
use crate::model::{DeconvProblem, Hyperparams, IntensityField, SpatialCovariance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbInit {
    pub e_x: Option<IntensityField>,
    pub e_sigma2: f64,
    pub e_gamma2: f64,
    pub e_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbConfig {
    pub max_iters: usize,
    /// Stopping threshold is `sqrt(N) * epsilon_scale`.
    pub epsilon_scale: f64,
    pub init: Option<VbInit>,
    /// Halve the residual in the `σ²` update, as the exact conditional does.
    /// `false` reproduces the update without the factor.
    pub half_residual_factor: bool,
    pub degenerate_qx: bool,
    pub acceleration: Acceleration,
}

/// Extrapolation applied to the scalar moments between cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceleration {
    /// Plain successive substitution.
    None,
    /// Squared extrapolation (SQUAREM, step-length scheme 3) of the log moments.
    #[default]
    Squarem,
}

impl Default for VbConfig {
    fn default() -> Self {
        VbConfig {
            max_iters: 500,
            epsilon_scale: 1e-5,
            init: None,
            half_residual_factor: true,
            degenerate_qx: true,
            acceleration: Acceleration::default(),
        }
    }
}

impl VbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be >= 1"));
        }
        if !(self.epsilon_scale > 0.0) {
            return Err(Error::param("epsilon_scale must be > 0"));
        }
        if let Some(i) = &self.init {
            if !(i.e_sigma2 > 0.0 && i.e_gamma2 > 0.0 && i.e_beta > 0.0) {
                return Err(Error::param("initial moments must be positive"));
            }
        }
        Ok(())
    }

    pub fn threshold(&self, n: usize) -> f64 {
        (n as f64).sqrt() * self.epsilon_scale
    }
}

/// Variational moments after the last completed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct VbState {
    pub e_x: IntensityField,
    pub cov_x: Option<DenseMatrix<f64>>,
    pub e_sigma2: f64,
    pub e_gamma2: f64,
    pub e_beta: f64,
    pub iterations: usize,
    /// Last value of the stopping criterion.
    pub criterion: f64,
    pub converged: bool,
    /// Stopping-criterion value per iteration (per outer step when accelerated).
    pub history: Vec<f64>,
}

/// `q(x)` update. Returns `E(x)` and, in full mode, `cov(x)`.
pub fn vb_update_x(
    problem: &DeconvProblem,
    e_sigma2: f64,
    e_gamma2: f64,
    degenerate: bool,
) -> Result<(IntensityField, Option<DenseMatrix<f64>>)> {
    if !(e_sigma2 > 0.0 && e_gamma2 > 0.0) {
        return Err(Error::param("scalar moments must be positive"));
    }
    let precision = precision_matrix(problem, e_sigma2, e_gamma2);
    let factor = SpdFactor::new(precision.as_ref())
        .map_err(|_| Error::numerical("q(x) precision is singular"))?;
    let rhs: Vec<f64> = problem.hty().iter().map(|v| v / e_sigma2).collect();
    if degenerate {
        Ok((IntensityField::new(factor.solve(&rhs)), None))
    } else {
        let cov = factor.inverse();
        let e_x = dense_matvec(&cov, &rhs);
        Ok((IntensityField::new(e_x), Some(cov)))
    }
}

/// `tr(A B)` for symmetric `A`, `B`.
fn trace_of_product(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> f64 {
    let mut t = 0.0;
    for j in 0..a.ncols() {
        t += a.col_as_slice(j).iter().zip(b.col_as_slice(j)).map(|(x, y)| x * y).sum::<f64>();
    }
    t
}

/// `E‖y − Hx‖²` under `q(x)`.
pub fn expected_residual(problem: &DeconvProblem, e_x: &[f64], cov_x: Option<&DenseMatrix<f64>>) -> f64 {
    let r = problem.residual_sq(e_x);
    match cov_x {
        Some(c) => r + trace_of_product(problem.gram(), c),
        None => r,
    }
}

pub fn vb_update_sigma2(
    problem: &DeconvProblem,
    e_x: &[f64],
    cov_x: Option<&DenseMatrix<f64>>,
    e_beta: f64,
    hyper: &Hyperparams,
    half_residual_factor: bool,
) -> f64 {
    let n = problem.len() as f64;
    let c = if half_residual_factor { 0.5 } else { 1.0 };
    (e_beta + c * expected_residual(problem, e_x, cov_x)) / (0.5 * n + hyper.alpha - 1.0)
}

/// `E(γ²)`. With few cores and the default weak prior the denominator
/// `N/2 + η − 1` is tiny, so the estimate is then prior-sensitive.
pub fn vb_update_gamma2(
    cov: &SpatialCovariance,
    e_x: &[f64],
    cov_x: Option<&DenseMatrix<f64>>,
    hyper: &Hyperparams,
) -> f64 {
    let n = e_x.len() as f64;
    let mut q = cov.quad_form_inv(e_x);
    if let Some(c) = cov_x {
        q += trace_of_product(cov.inverse(), c);
    }
    (hyper.nu + 0.5 * q) / (0.5 * n + hyper.eta - 1.0)
}

pub fn vb_update_beta(e_sigma2: f64, hyper: &Hyperparams) -> f64 {
    (hyper.alpha + hyper.alpha_o) * hyper.beta_o * e_sigma2 / (hyper.beta_o + e_sigma2)
}

impl VbState {
    fn initial(problem: &DeconvProblem, hyper: &Hyperparams, config: &VbConfig) -> Result<Self> {
        let (e_x, e_sigma2, e_gamma2, e_beta) = match &config.init {
            Some(i) => {
                let e_x = i.e_x.clone().unwrap_or_else(|| IntensityField::zeros(problem.len()));
                Error::check_len(problem.len(), e_x.len())?;
                (e_x, i.e_sigma2, i.e_gamma2, i.e_beta)
            }
            None => {
                let p = data_driven_init(problem, hyper);
                (p.x, p.sigma2, p.gamma2, p.beta)
            }
        };
        Ok(VbState {
            e_x,
            cov_x: None,
            e_sigma2,
            e_gamma2,
            e_beta,
            iterations: 0,
            criterion: f64::INFINITY,
            converged: false,
            history: Vec::new(),
        })
    }

    /// One full cycle x → σ² → γ² → β. Returns the summed change of the four
    /// quantities.
    pub fn step(
        &mut self,
        problem: &DeconvProblem,
        hyper: &Hyperparams,
        config: &VbConfig,
    ) -> Result<f64> {
        self.step_with(problem, hyper, config, &mut XSolveCache::default())
    }

    fn step_with(
        &mut self,
        problem: &DeconvProblem,
        hyper: &Hyperparams,
        config: &VbConfig,
        cache: &mut XSolveCache,
    ) -> Result<f64> {
        let (e_x, cov_x) = if config.degenerate_qx {
            (cache.solve(problem, self.e_sigma2, self.e_gamma2)?, None)
        } else {
            vb_update_x(problem, self.e_sigma2, self.e_gamma2, false)?
        };
        let e_sigma2 = vb_update_sigma2(
            problem,
            &e_x,
            cov_x.as_ref(),
            self.e_beta,
            hyper,
            config.half_residual_factor,
        );
        let e_gamma2 = vb_update_gamma2(problem.covariance(), &e_x, cov_x.as_ref(), hyper);
        let e_beta = vb_update_beta(e_sigma2, hyper);
        if !(e_sigma2 > 0.0 && e_gamma2 > 0.0 && e_beta > 0.0) || !e_x.is_finite() {
            return Err(Error::numerical("variational moments left their support"));
        }
        let dx: Vec<f64> = e_x.iter().zip(self.e_x.iter()).map(|(a, b)| a - b).collect();
        let change = norm2(&dx)
            + (e_sigma2 - self.e_sigma2).abs()
            + (e_gamma2 - self.e_gamma2).abs()
            + (e_beta - self.e_beta).abs();
        self.e_x = e_x;
        self.cov_x = cov_x;
        self.e_sigma2 = e_sigma2;
        self.e_gamma2 = e_gamma2;
        self.e_beta = e_beta;
        self.iterations += 1;
        Ok(change)
    }
}

/// Iterates until the summed change drops to `sqrt(N) * epsilon_scale` or
/// `max_iters` is reached. Non-convergence is reported, not an error.
pub fn run_vb(
    problem: &DeconvProblem,
    hyper: &Hyperparams,
    config: &VbConfig,
) -> Result<(EstimateResult, VbState)> {
    config.validate()?;
    hyper.validate()?;
    let start = Instant::now();
    let eps = config.threshold(problem.len());
    let mut state = VbState::initial(problem, hyper, config)?;
    let mut cache = XSolveCache::default();
    match config.acceleration {
        Acceleration::None => {
            while state.iterations < config.max_iters {
                let change = state.step_with(problem, hyper, config, &mut cache)?;
                state.criterion = change;
                state.history.push(change);
                if change <= eps {
                    state.converged = true;
                    break;
                }
            }
        }
        Acceleration::Squarem => run_squarem(&mut state, problem, hyper, config, eps, &mut cache)?,
    }
    if !state.converged {
        log::warn!(
            "VB stopped after {} iterations with criterion {:.3e} > {:.3e}",
            state.iterations,
            state.criterion,
            eps
        );
    }
    let result = EstimateResult {
        solver: Solver::Vb,
        x: state.e_x.clone(),
        sigma2: Some(state.e_sigma2),
        gamma2: Some(state.e_gamma2),
        beta: Some(state.e_beta),
        lambda: None,
        iterations: state.iterations,
        converged: state.converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((result, state))
}

/// Degenerate `q(x)` solves `(HᵀH + r Δ⁻¹) x = Hᵀy` with `r = σ²/γ²`. The
/// last factorization is kept; when `r` has barely moved it preconditions
/// CG instead of refactorizing.
#[derive(Default)]
struct XSolveCache {
    factored: Option<(f64, SpdFactor)>,
    last: Option<(f64, Vec<f64>)>,
}

const PCG_MAX_RATIO: f64 = 0.02;
const PCG_MAX_ITERS: usize = 25;
const PCG_TOL: f64 = 1e-14;

impl XSolveCache {
    fn solve(&mut self, problem: &DeconvProblem, e_sigma2: f64, e_gamma2: f64) -> Result<IntensityField> {
        if !(e_sigma2 > 0.0 && e_gamma2 > 0.0) {
            return Err(Error::param("scalar moments must be positive"));
        }
        let r = e_sigma2 / e_gamma2;
        if let Some((rl, x)) = &self.last {
            if *rl == r {
                return Ok(IntensityField::new(x.clone()));
            }
        }
        if let Some((rf, factor)) = &self.factored {
            if (r / rf - 1.0).abs() <= PCG_MAX_RATIO {
                if let Some(x) = pcg(problem, r, factor) {
                    self.last = Some((r, x.clone()));
                    return Ok(IntensityField::new(x));
                }
            }
        }
        let a = problem.gram();
        let b = problem.covariance().inverse();
        let n = a.nrows();
        let mut p = DenseMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let (ca, cb) = (a.col_as_slice(j), b.col_as_slice(j));
            for (dst, (u, v)) in p.col_as_slice_mut(j).iter_mut().zip(ca.iter().zip(cb)) {
                *dst = u + r * v;
            }
        }
        let factor =
            SpdFactor::new(p.as_ref()).map_err(|_| Error::numerical("q(x) precision is singular"))?;
        let x = factor.solve(problem.hty());
        self.factored = Some((r, factor));
        self.last = Some((r, x.clone()));
        Ok(IntensityField::new(x))
    }
}

/// CG on `(HᵀH + r Δ⁻¹) x = Hᵀy` preconditioned by a factor for a nearby
/// `r`. Stops once the preconditioned residual, which tracks the error, is
/// below `PCG_TOL` relative to `x`; `None` if that is not reached.
fn pcg(problem: &DeconvProblem, r: f64, factor: &SpdFactor) -> Option<Vec<f64>> {
    let h = problem.kernel().matrix();
    let b = problem.covariance().inverse();
    let apply = |v: &[f64]| -> Vec<f64> {
        let hv = h.matvec_transpose(&h.matvec(v));
        let bv = dense_matvec(b, v);
        hv.iter().zip(&bv).map(|(p, q)| p + r * q).collect()
    };
    let mut x = factor.solve(problem.hty());
    let ax = apply(&x);
    let mut res: Vec<f64> = problem.hty().iter().zip(&ax).map(|(u, v)| u - v).collect();
    let mut z = factor.solve(&res);
    let mut dir = z.clone();
    let mut rz = dot(&res, &z);
    for _ in 0..PCG_MAX_ITERS {
        if norm2(&z) <= PCG_TOL * norm2(&x) {
            return Some(x);
        }
        let q = apply(&dir);
        let dq = dot(&dir, &q);
        if !(dq > 0.0) {
            return None;
        }
        let step = rz / dq;
        for i in 0..x.len() {
            x[i] += step * dir[i];
            res[i] -= step * q[i];
        }
        z = factor.solve(&res);
        let rz_new = dot(&res, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..dir.len() {
            dir[i] = z[i] + beta * dir[i];
        }
    }
    (norm2(&z) <= PCG_TOL * norm2(&x)).then_some(x)
}

fn scalars(s: &VbState) -> [f64; 3] {
    [s.e_sigma2, s.e_gamma2, s.e_beta]
}

fn log_scalars(s: &VbState) -> [f64; 3] {
    scalars(s).map(f64::ln)
}

/// Each outer step runs two plain cycles, extrapolates the scalar moments
/// and finishes with a stabilizing plain cycle. Convergence is judged on the
/// change between consecutive outer steps.
fn run_squarem(
    state: &mut VbState,
    problem: &DeconvProblem,
    hyper: &Hyperparams,
    config: &VbConfig,
    eps: f64,
    cache: &mut XSolveCache,
) -> Result<()> {
    while state.iterations < config.max_iters {
        let prev_x = state.e_x.clone();
        let t0 = scalars(state);
        let l0 = log_scalars(state);
        state.step_with(problem, hyper, config, cache)?;
        let l1 = log_scalars(state);
        state.step_with(problem, hyper, config, cache)?;
        let l2 = log_scalars(state);
        let r: Vec<f64> = (0..3).map(|k| l1[k] - l0[k]).collect();
        let v: Vec<f64> = (0..3).map(|k| l2[k] - 2.0 * l1[k] + l0[k]).collect();
        let (nr, nv) = (norm2(&r), norm2(&v));
        if nv > 0.0 && nr.is_finite() {
            let alpha = (-nr / nv).min(-1.0);
            let cand: Vec<f64> =
                (0..3).map(|k| (l0[k] - 2.0 * alpha * r[k] + alpha * alpha * v[k]).exp()).collect();
            if cand.iter().all(|c| c.is_finite() && *c > 0.0) {
                state.e_sigma2 = cand[0];
                state.e_gamma2 = cand[1];
                state.e_beta = cand[2];
            }
        }
        state.step_with(problem, hyper, config, cache)?;
        let t3 = scalars(state);
        let dx: Vec<f64> = state.e_x.iter().zip(prev_x.iter()).map(|(a, b)| a - b).collect();
        let change = norm2(&dx) + (0..3).map(|k| (t3[k] - t0[k]).abs()).sum::<f64>();
        state.criterion = change;
        state.history.push(change);
        if change <= eps {
            state.converged = true;
            return Ok(());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CsrMatrix;
    use crate::model::{build_covariance, CoreMap, CouplingKernel, CovarianceParams, KernelParams};

    fn identity_problem(y: Vec<f64>) -> DeconvProblem {
        let n = y.len();
        let d = DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
        let cov = SpatialCovariance::from_matrix(d, CovarianceParams::new(1.0, 1.0).unwrap()).unwrap();
        DeconvProblem::new(IntensityField::new(y), CouplingKernel::identity(n), cov).unwrap()
    }

    fn small_problem(n_side: usize, seed: u64) -> DeconvProblem {
        let cores = CoreMap::hex_lattice(n_side, n_side, 3.3, 1.0, 0.5, seed).unwrap();
        let h = crate::model::build_coupling_kernel(&cores, KernelParams::gaussian(5.0)).unwrap();
        let cov = build_covariance(&cores, CovarianceParams::new(4.0, 1.0).unwrap(), 1e-8).unwrap();
        let y: IntensityField = (0..cores.len()).map(|i| 20.0 + 10.0 * (i as f64 * 0.37).sin()).collect();
        DeconvProblem::new(y, h, cov).unwrap()
    }

    #[test]
    fn cached_solves_match_direct_solve() {
        let p = small_problem(16, 2);
        let mut cache = XSolveCache::default();
        for (s2, g2) in [(2.0, 30.0), (2.0, 30.0), (2.01, 30.0), (2.0, 30.2), (9.0, 4.0)] {
            let (direct, _) = vb_update_x(&p, s2, g2, true).unwrap();
            let cached = cache.solve(&p, s2, g2).unwrap();
            let scale = norm2(&direct);
            let diff: Vec<f64> = direct.iter().zip(cached.iter()).map(|(a, b)| a - b).collect();
            assert!(norm2(&diff) <= 1e-10 * scale, "{s2} {g2}: {}", norm2(&diff) / scale);
        }
    }

    #[test]
    fn identity_operators_shrink_elementwise() {
        let p = identity_problem(vec![4.0, -2.0, 7.0]);
        let (e_x, _) = vb_update_x(&p, 2.0, 3.0, true).unwrap();
        for (e, y) in e_x.iter().zip([4.0, -2.0, 7.0]) {
            assert!((e - y * 3.0 / 5.0).abs() < 1e-13);
        }
    }

    #[test]
    fn vanishing_noise_inverts_h() {
        let m = DenseMatrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.4 });
        let h = CouplingKernel::from_matrix(CsrMatrix::from_dense(&m), KernelParams::default()).unwrap();
        let d = DenseMatrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.2 });
        let cov = SpatialCovariance::from_matrix(d, CovarianceParams::new(1.0, 1.0).unwrap()).unwrap();
        let x = [3.0, -1.0];
        let y = IntensityField::new(vec![3.0 - 0.4, 1.2 - 1.0]);
        let p = DeconvProblem::new(y, h, cov).unwrap();
        let (e_x, _) = vb_update_x(&p, 1e-10, 1.0, true).unwrap();
        for (a, b) in e_x.iter().zip(x) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn degenerate_and_full_modes_agree() {
        let p = small_problem(12, 1);
        let (a, _) = vb_update_x(&p, 2.0, 50.0, true).unwrap();
        let (b, cov) = vb_update_x(&p, 2.0, 50.0, false).unwrap();
        assert!(cov.is_some());
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn scalar_update_closed_forms() {
        let hyper = Hyperparams::default();
        let p = identity_problem(vec![1.0, 1.0]);
        // zero residual
        let s = vb_update_sigma2(&p, &[1.0, 1.0], None, 1.0, &hyper, true);
        assert!((s - 1.0 / (1.0 + 10.0 - 1.0)).abs() < 1e-15);
        // R = 2, c = 1/2 → (1 + 1) / 10
        let s = vb_update_sigma2(&p, &[0.0, 0.0], None, 1.0, &hyper, true);
        assert!((s - 0.2).abs() < 1e-15);
        let s = vb_update_sigma2(&p, &[0.0, 0.0], None, 1.0, &hyper, false);
        assert!((s - 0.3).abs() < 1e-15);

        let g = vb_update_gamma2(p.covariance(), &[0.0, 0.0], None, &hyper);
        assert!((g - hyper.nu / (1.0 + hyper.eta - 1.0)).abs() < 1e-12);
        let g = vb_update_gamma2(p.covariance(), &[1.0, 1.0], None, &hyper);
        assert!((g - 1.001 / 0.001).abs() < 1e-9);

        assert!((vb_update_beta(0.1, &hyper) - 1.0).abs() < 1e-15);
        assert!((vb_update_beta(1e15, &hyper) - 2.0).abs() < 1e-12);
        let mut prev = 0.0;
        for k in 1..50 {
            let b = vb_update_beta(k as f64 * 0.05, &hyper);
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn converged_state_is_a_fixed_point() {
        let p = small_problem(14, 2);
        let hyper = Hyperparams::default();
        let cfg = VbConfig::default();
        let (res, mut state) = run_vb(&p, &hyper, &cfg).unwrap();
        assert!(res.converged, "criterion {}", state.criterion);
        let eps = cfg.threshold(p.len());
        let before = state.clone();
        state.step(&p, &hyper, &cfg).unwrap();
        let dx: Vec<f64> = state.e_x.iter().zip(before.e_x.iter()).map(|(a, b)| a - b).collect();
        assert!(norm2(&dx) < eps / 4.0);
        assert!((state.e_sigma2 - before.e_sigma2).abs() < eps / 4.0);
        assert!((state.e_gamma2 - before.e_gamma2).abs() < eps / 4.0);
        assert!((state.e_beta - before.e_beta).abs() < eps / 4.0);
    }

    #[test]
    fn scalar_fixed_point_oracle() {
        // H = Δ = 1: iterate the four closed-form maps by hand and compare.
        let p = identity_problem(vec![6.0]);
        let hyper = Hyperparams { eta: 2.0, nu: 1.0, ..Default::default() };
        let cfg = VbConfig {
            init: Some(VbInit { e_x: None, e_sigma2: 1.0, e_gamma2: 1.0, e_beta: 1.0 }),
            epsilon_scale: 1e-12,
            max_iters: 10_000,
            ..Default::default()
        };
        let (res, _) = run_vb(&p, &hyper, &cfg).unwrap();
        let (mut s, mut g, mut b) = (1.0f64, 1.0f64, 1.0f64);
        let mut x = 0.0;
        for _ in 0..10_000 {
            x = 6.0 * g / (g + s);
            s = (b + 0.5 * (6.0 - x) * (6.0 - x)) / (0.5 + hyper.alpha - 1.0);
            g = (hyper.nu + 0.5 * x * x) / (0.5 + hyper.eta - 1.0);
            b = (hyper.alpha + hyper.alpha_o) * hyper.beta_o * s / (hyper.beta_o + s);
        }
        assert!((res.x[0] - x).abs() < 1e-9);
        assert!((res.sigma2.unwrap() - s).abs() < 1e-9);
        assert!((res.gamma2.unwrap() - g).abs() < 1e-9);
    }

    #[test]
    fn invalid_configs() {
        let p = identity_problem(vec![1.0]);
        let bad = VbConfig { max_iters: 0, ..Default::default() };
        assert!(run_vb(&p, &Hyperparams::default(), &bad).is_err());
        let bad = VbConfig { epsilon_scale: 0.0, ..Default::default() };
        assert!(run_vb(&p, &Hyperparams::default(), &bad).is_err());
    }
}
