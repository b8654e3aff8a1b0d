//! Univariate normal truncated to `[lower, ∞)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// Draws from `N(mean, sd²)` restricted to `[lower, ∞)`.
///
/// Plain rejection while the standardized bound is non-positive (acceptance
/// ≥ 1/2); above that, exponential-proposal rejection with the optimal rate.
pub fn sample_lower_truncated<R: Rng + ?Sized>(mean: f64, sd: f64, lower: f64, rng: &mut R) -> f64 {
    debug_assert!(sd > 0.0);
    let a = (lower - mean) / sd;
    let z = if a <= 0.0 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= a {
                break z;
            }
        }
    } else {
        let rate = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = Exp1.sample(rng);
            let z = a + e / rate;
            let rho = (-0.5 * (z - rate) * (z - rate)).exp();
            if rng.random::<f64>() <= rho {
                break z;
            }
        }
    };
    (mean + sd * z).max(lower)
}

/// Mean of `N(mean, sd²)` truncated to `[0, ∞)`.
pub fn positive_truncated_mean(mean: f64, sd: f64) -> f64 {
    let alpha = -mean / sd;
    mean + sd * inverse_mills(alpha)
}

/// `φ(a) / (1 − Φ(a))`, stable for large `a`.
fn inverse_mills(a: f64) -> f64 {
    let tail = 0.5 * statrs::function::erf::erfc(a / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if tail > 1e-300 {
        pdf / tail
    } else {
        // asymptotic expansion
        a + 1.0 / a
    }
}
