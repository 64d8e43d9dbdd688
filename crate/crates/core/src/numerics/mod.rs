//! Special functions, quadrature, root finding and finite differences.

mod erf;
mod quadrature;
mod roots;

pub use erf::{erf, erfc};
pub use quadrature::{gauss_legendre, integrate, QuadratureConfig};
pub use roots::{find_root_illinois, find_root_increasing, golden_section_max, maximize_on_grid};

use crate::error::{PmlError, Result};

/// `sqrt(2 pi)`.
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
/// `ln sqrt(2 pi)`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn require_finite(op: &'static str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(PmlError::domain(op, format!("argument must be finite, got {x}")))
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    require_finite("std_normal_cdf", x)?;
    Ok(norm_cdf(x))
}

/// Standard normal survival function `1 - Phi(x)`, without cancellation.
pub fn std_normal_sf(x: f64) -> Result<f64> {
    require_finite("std_normal_sf", x)?;
    Ok(norm_sf(x))
}

/// Standard normal density. Underflows to zero for large `|x|`.
pub fn std_normal_pdf(x: f64) -> Result<f64> {
    require_finite("std_normal_pdf", x)?;
    Ok(norm_pdf(x))
}

/// Inverse of the standard normal CDF on `(0, 1)`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(PmlError::domain(
            "std_normal_quantile",
            format!("probability must lie in (0, 1), got {p}"),
        ));
    }
    Ok(norm_quantile(p))
}

// Unchecked versions used in the hot loops. Infinite arguments give the
// limiting values.

#[inline]
pub(crate) fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub(crate) fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

#[inline]
pub(crate) fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `P(lo < Z < hi)` for `lo <= hi`, evaluated on the side where it does not cancel.
#[inline]
pub(crate) fn norm_interval(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        norm_sf(lo) - norm_sf(hi)
    } else if hi <= 0.0 {
        norm_cdf(hi) - norm_cdf(lo)
    } else {
        1.0 - norm_cdf(lo) - norm_sf(hi)
    }
}

/// `P(|Z| < h) = 2 Phi(h) - 1`.
#[inline]
pub(crate) fn norm_centered_mass(h: f64) -> f64 {
    erf(h * std::f64::consts::FRAC_1_SQRT_2)
}

pub(crate) fn norm_quantile(p: f64) -> f64 {
    if p > 0.5 {
        // 1 - p is exact here.
        return -norm_quantile(1.0 - p);
    }
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
    let mut x = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // Halley steps against the accurate CDF.
    for _ in 0..2 {
        let e = norm_cdf(x) - p;
        let u = e * SQRT_2PI * (0.5 * x * x).exp();
        if !u.is_finite() {
            break;
        }
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Central first difference of `f` at `x` with step `h`.
pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central second difference of `f` at `x` with step `h`.
pub fn second_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}
