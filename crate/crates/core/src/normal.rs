//! Standard normal CDF and quantile, and the logistic CDF.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// `Φ(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Logistic CDF `1 / (1 + e^{−z})`.
pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

// Acklam's rational approximation (relative error ~1.15e-9 before refinement).
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;

fn tail(q: f64) -> f64 {
    (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
        / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
}

/// `Φ⁻¹(u)` for `u ∈ (0, 1)`: a rational first guess polished by one Halley
/// step against [`normal_cdf`].
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("normal quantile needs u in (0, 1), got {u}")));
    }
    let x = if u < P_LOW {
        tail((-2.0 * u.ln()).sqrt())
    } else if u <= 1.0 - P_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - u).ln()).sqrt())
    };

    // Halley refinement on e = Φ(x) − u. In the upper half Φ(x) − u is
    // formed as (1 − u) − (1 − Φ(x)) to avoid cancellation.
    let e = if u > 0.5 {
        (1.0 - u) - 0.5 * libm::erfc(x / SQRT_2)
    } else {
        normal_cdf(x) - u
    };
    let step = e * (2.0 * PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - step / (1.0 + x * step / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection on `normal_cdf`; slow but independent of the rational
    /// approximation.
    fn bisect_quantile(u: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn median_is_zero() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn known_value() {
        let q = normal_quantile(0.975).unwrap();
        assert!((q - 1.959963984540054).abs() < 1e-12, "{q}");
    }

    #[test]
    fn matches_bisection() {
        for &u in &[
            1e-6,
            1e-4,
            0.01,
            0.02425,
            0.1,
            0.3,
            0.7,
            0.9,
            0.97575,
            0.999,
            1.0 - 1e-6,
        ] {
            let q = normal_quantile(u).unwrap();
            assert!((q - bisect_quantile(u)).abs() < 1e-9, "u={u}");
        }
    }

    #[test]
    fn round_trip() {
        let mut u = 1e-6;
        while u < 1.0 - 1e-6 {
            let q = normal_quantile(u).unwrap();
            assert!((normal_cdf(q) - u).abs() < 1e-9, "u={u}");
            u += 1e-3;
        }
    }

    #[test]
    fn domain() {
        for u in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(normal_quantile(u), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn logistic_reference() {
        assert!((logistic(-1.5) - 0.18242552380635635).abs() < 1e-15);
        assert_eq!(logistic(0.0), 0.5);
    }
}
