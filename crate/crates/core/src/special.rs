//! Standard normal distribution helpers.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::SQRT_2;

/// 1/√(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density φ.
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function Φ.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail Ψ(x) = 1 − Φ(x), accurate far into the tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Inverse of Φ. Returns ±∞ at the endpoints.
pub fn norm_inv(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    // Halley steps against the accurate tail functions.
    for _ in 0..2 {
        let (f, d) = if x < 0.0 { (norm_cdf(x) - p, norm_pdf(x)) } else { ((1.0 - p) - norm_sf(x), norm_pdf(x)) };
        if d == 0.0 || !x.is_finite() {
            break;
        }
        let t = f / d;
        x -= t / (1.0 + 0.5 * x * t);
    }
    x
}

/// Standard Gumbel distribution function Λ(x) = exp(−e^{−x}).
pub fn gumbel_cdf(x: f64) -> f64 {
    (-(-x).exp()).exp()
}

/// `exp` with its argument clamped to ±700, so that double exponentials
/// saturate to 0 or ∞ instead of overflowing into NaN.
#[inline]
pub fn exp_clamped(x: f64) -> f64 {
    x.clamp(-700.0, 700.0).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tail_values() {
        assert_relative_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(norm_sf(4.0), 3.167_124_183_311_986e-5, max_relative = 1e-12);
        assert_relative_eq!(norm_sf(4.5), 3.397_673_124_730_053_5e-6, max_relative = 1e-12);
        assert_relative_eq!(norm_cdf(-1.959_963_984_540_054), 0.025, max_relative = 1e-12);
    }

    #[test]
    fn inverse_round_trips() {
        for &p in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999_999] {
            assert_relative_eq!(norm_cdf(norm_inv(p)), p, max_relative = 1e-10);
        }
        assert_eq!(norm_inv(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn clamped_exponential_saturates() {
        assert!(exp_clamped(1e6).is_finite());
        assert_eq!((-exp_clamped(f64::INFINITY)).exp(), 0.0);
        assert_eq!((-exp_clamped(f64::NEG_INFINITY)).exp(), 1.0);
    }
}
