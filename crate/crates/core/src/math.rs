//! Float helpers for `no_std` builds.
//!
//! `f64::exp` and friends live in `std`, not `core`, so every transcendental
//! call in this crate goes through `libm` via these re-exports. Using libm on
//! std hosts too keeps results bit-identical across environments.

pub use libm::{cos, exp, fabs, floor, log, pow, round, sin, sqrt, tanh};

use libm::erf;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / core::f64::consts::SQRT_2))
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    exp(-0.5 * z * z) / sqrt(2.0 * core::f64::consts::PI)
}

/// Mean of a slice. Empty input returns 0.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n-1) standard deviation. Fewer than two samples returns 0.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    sqrt(ss / (xs.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_anchors() {
        assert!(fabs(normal_cdf(0.0) - 0.5) < 1e-15);
        // Phi(1.96) from tables
        assert!(fabs(normal_cdf(1.96) - 0.9750021) < 1e-6);
        assert!(fabs(normal_cdf(-1.96) + normal_cdf(1.96) - 1.0) < 1e-12);
    }

    #[test]
    fn round_ties_away_from_zero() {
        assert_eq!(round(511.5), 512.0);
        assert_eq!(round(0.5), 1.0);
        assert_eq!(round(-0.5), -1.0);
        assert_eq!(round(2.5), 3.0);
    }

    #[test]
    fn std_dev_matches_two_point() {
        // {0, 2}: mean 1, unbiased variance 2
        assert!(fabs(std_dev(&[0.0, 2.0]) - sqrt(2.0)) < 1e-15);
    }
}
