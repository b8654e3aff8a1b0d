//! Exact Hamiltonian dynamics for a Gaussian truncated to the nonnegative
//! orthant.
//!
//! With the precision `P` as mass matrix the unconstrained trajectory is
//! `x(t) = μ + a cos t + b sin t`, so wall hits are found in closed form and
//! the walk is rejection-free. Each wall contact reflects the velocity in the
//! metric induced by `P`, which needs one column of `P⁻¹`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

/// Statistics of one trajectory.
#[derive(Debug, Clone, Copy, Default)]
pub struct HmcTrace {
    pub bounces: usize,
}

/// Earliest `t` in `(0, horizon)` where `mu + a cos t + b sin t` reaches 0
/// while decreasing.
fn first_hit(mu: f64, a: f64, b: f64, horizon: f64) -> Option<f64> {
    let r = a.hypot(b);
    if r <= mu.abs() || r == 0.0 {
        return None;
    }
    let phi = b.atan2(a);
    let c = (-mu / r).clamp(-1.0, 1.0).acos();
    let mut best: Option<f64> = None;
    for cand in [phi + c, phi - c] {
        let mut t = cand.rem_euclid(2.0 * PI);
        if t < 1e-12 {
            t += 2.0 * PI;
        }
        let vel = -a * t.sin() + b * t.cos();
        if t < horizon && vel < 0.0 && best.is_none_or(|s| t < s) {
            best = Some(t);
        }
    }
    best
}

/// Moves `x` along one trajectory of length π/2 targeting `N₊(mean, P⁻¹)`.
pub(crate) fn exact_hmc_step<R: Rng + ?Sized>(
    x: &mut [f64],
    mean: &[f64],
    factor: &SpdFactor,
    rng: &mut R,
) -> Result<HmcTrace> {
    let n = x.len();
    let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    // velocity ~ N(0, P⁻¹)
    let mut b = factor.solve_lower_transpose(&xi);
    let mut a: Vec<f64> = x.iter().zip(mean).map(|(xi, m)| xi - m).collect();
    let mut remaining = FRAC_PI_2;
    let max_bounces = 50 * n + 1000;
    let mut trace = HmcTrace::default();
    loop {
        let mut hit: Option<(f64, usize)> = None;
        for i in 0..n {
            if let Some(t) = first_hit(mean[i], a[i], b[i], remaining) {
                if hit.is_none_or(|(s, _)| t < s) {
                    hit = Some((t, i));
                }
            }
        }
        let (t, wall) = match hit {
            Some(h) => h,
            None => {
                let (c, s) = (remaining.cos(), remaining.sin());
                for i in 0..n {
                    x[i] = (mean[i] + a[i] * c + b[i] * s).max(0.0);
                }
                return Ok(trace);
            }
        };
        let (c, s) = (t.cos(), t.sin());
        let mut v = vec![0.0; n];
        for i in 0..n {
            x[i] = mean[i] + a[i] * c + b[i] * s;
            v[i] = -a[i] * s + b[i] * c;
        }
        x[wall] = 0.0;
        let mut e = vec![0.0; n];
        e[wall] = 1.0;
        let col = factor.solve(&e);
        let k = 2.0 * v[wall] / col[wall];
        for i in 0..n {
            v[i] -= k * col[i];
        }
        for i in 0..n {
            a[i] = x[i] - mean[i];
        }
        b = v;
        remaining -= t;
        trace.bounces += 1;
        if trace.bounces > max_bounces {
            return Err(Error::numerical("exact HMC exceeded its bounce budget"));
        }
    }
}
