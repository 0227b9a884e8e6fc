//! Numeric helpers shared across the crate: `no_std` float shims, compensated
//! summation, and the max-shifted weighted log-sum-exp that underlies every
//! soft-value computation.

/// Float operations missing from `core`. Backed by `libm` so the crate stays
/// `no_std`-compatible.
pub(crate) trait FloatExt {
    fn exp(self) -> f64;
    fn ln(self) -> f64;
    fn ln_1p(self) -> f64;
    fn sqrt(self) -> f64;
    fn tanh(self) -> f64;
    fn cos(self) -> f64;
    fn hypot(self, other: f64) -> f64;
}

impl FloatExt for f64 {
    #[inline]
    fn exp(self) -> f64 {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> f64 {
        libm::log(self)
    }
    #[inline]
    fn ln_1p(self) -> f64 {
        libm::log1p(self)
    }
    #[inline]
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> f64 {
        libm::tanh(self)
    }
    #[inline]
    fn cos(self) -> f64 {
        libm::cos(self)
    }
    #[inline]
    fn hypot(self, other: f64) -> f64 {
        libm::hypot(self, other)
    }
}

/// Neumaier-compensated sum. Refining an atom into `n` parts must not move
/// the partition function, so sums of weighted exponentials go through this.
pub(crate) fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `ln(sum_k w_k * exp(q_k / alpha))`, max-shifted so that `|q/alpha|` up to
/// ~1e6 neither overflows nor underflows to `-inf` as long as one weight is
/// positive.
pub(crate) fn weighted_log_sum_exp_scaled(pairs: &[(f64, f64)], alpha: f64) -> f64 {
    debug_assert!(!pairs.is_empty());
    let m = pairs
        .iter()
        .map(|&(_, q)| q)
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = neumaier_sum(pairs.iter().map(|&(w, q)| w * ((q - m) / alpha).exp()));
    m / alpha + shifted.ln()
}

/// `ln(cosh(x))` without overflow for large `|x|`.
pub(crate) fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a - core::f64::consts::LN_2 + (-2.0 * a).exp().ln_1p()
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub(crate) fn next_f64(rng: &mut impl rand_core::RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[lo, hi)`.
pub(crate) fn next_in_range(rng: &mut impl rand_core::RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * next_f64(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_handles_extreme_scores() {
        let v = weighted_log_sum_exp_scaled(&[(1.0, 1e6), (1.0, -1e6)], 1.0);
        assert_eq!(v, 1e6);
        let v = weighted_log_sum_exp_scaled(&[(2.0, -1e6)], 1.0);
        assert!((v - (-1e6 + 2.0_f64.ln())).abs() < 1e-6);
    }

    #[test]
    fn ln_cosh_matches_naive_in_safe_range() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let naive = libm::log(libm::cosh(x));
            assert!((ln_cosh(x) - naive).abs() < 1e-12);
        }
        assert!((ln_cosh(800.0) - (800.0 - core::f64::consts::LN_2)).abs() < 1e-12);
    }
}
