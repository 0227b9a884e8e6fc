//! Monte Carlo evaluation of the toy's branch values under squashed-Gaussian
//! policies, mirroring what a practical actor-critic reports at convergence.
//!
//! For a branch with pre-squash policy `N(mu, sigma)` and action
//! `a = tanh(x)`, the branch value is estimated as
//!
//! `V = gamma * E[r(a)] + alpha * (ln(sigma) + ln(2*pi)/2) + alpha * E[ln sech(x)]`
//!
//! i.e. branch rewards enter discounted once, the policy log-density is
//! taken at the distribution mean, and the squash correction contributes
//! `ln sech` of the pre-squash sample. The returned values are
//! `gamma * V` for the precise branch (rewards 1 inside `|a| <= 0.1`, -20
//! outside) and the wide branch (reward -1 everywhere).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::{ln_cosh, next_f64, FloatExt};

/// Pre-squash Gaussian parameters of a tanh-squashed policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPolicyParams {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianPolicyParams {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma }
    }
}

/// Seeded estimates of `Q(s_0, A_1)` and `Q(s_0, A_2)` under the given
/// branch policies. Deterministic for a fixed `(n_samples, seed)`.
pub fn toy_gaussian_values(
    params_g: GaussianPolicyParams,
    params_b: GaussianPolicyParams,
    alpha: f64,
    gamma: f64,
    n_samples: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q_good = branch_value(
        params_g,
        |a| if a.abs() <= 0.1 { 1.0 } else { -20.0 },
        alpha,
        gamma,
        n_samples,
        &mut rng,
    );
    let q_bad = branch_value(params_b, |_| -1.0, alpha, gamma, n_samples, &mut rng);
    (q_good, q_bad)
}

fn branch_value(
    params: GaussianPolicyParams,
    reward: impl Fn(f64) -> f64,
    alpha: f64,
    gamma: f64,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let n = n_samples.max(1);
    let mut reward_sum = 0.0;
    let mut squash_sum = 0.0;
    for _ in 0..n {
        let x = params.mu + params.sigma * standard_normal(rng);
        reward_sum += reward(x.tanh());
        squash_sum += -ln_cosh(x); // ln sech(x)
    }
    let log_density_at_mean =
        -(params.sigma.ln() + 0.5 * (2.0 * core::f64::consts::PI).ln());
    let value = gamma * reward_sum / n as f64
        + alpha * (-log_density_at_mean)
        + alpha * squash_sum / n as f64;
    gamma * value
}

/// Box-Muller transform; one draw per pair of uniforms.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - next_f64(rng); // (0, 1]
    let u2 = next_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * core::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let g = GaussianPolicyParams::new(0.013, 0.027);
        let b = GaussianPolicyParams::new(0.016, 0.877);
        let a = toy_gaussian_values(g, b, 1.0, 0.99, 10_000, 7);
        let c = toy_gaussian_values(g, b, 1.0, 0.99, 10_000, 7);
        assert_eq!(a, c);
        let d = toy_gaussian_values(g, b, 1.0, 0.99, 10_000, 8);
        assert_ne!(a, d);
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let z = standard_normal(&mut rng);
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {}", mean);
        assert!((var - 1.0).abs() < 0.02, "var {}", var);
    }
}
