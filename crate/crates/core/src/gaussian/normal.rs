//! Standard normal density, distribution function and quantile.
//!
//! The distribution function goes through the complementary error function so
//! that both tails keep relative accuracy; `ln_cdf` extends this below the
//! range where `Phi` itself underflows.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

/// `ln(sqrt(2 pi))`
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this argument `ln_cdf` switches to the asymptotic Mills-ratio series.
const ASYMPTOTIC_CUTOFF: f64 = -30.0;

pub fn pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

pub fn ln_pdf(u: f64) -> f64 {
    -0.5 * u * u - LN_SQRT_2PI
}

pub fn cdf(u: f64) -> f64 {
    0.5 * erfc(-u * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(u)`, accurate for large `u`.
pub fn sf(u: f64) -> f64 {
    cdf(-u)
}

pub fn ln_cdf(u: f64) -> f64 {
    if u.is_nan() {
        return f64::NAN;
    }
    if u == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if u < ASYMPTOTIC_CUTOFF {
        // Phi(u) = phi(u)/|u| * (1 - 1/u^2 + 3/u^4 - 15/u^6 + ...)
        let z = 1.0 / (u * u);
        let series = 1.0 - z * (1.0 - 3.0 * z * (1.0 - 5.0 * z * (1.0 - 7.0 * z * (1.0 - 9.0 * z))));
        return ln_pdf(u) - (-u).ln() + series.ln();
    }
    if u > 0.0 {
        (-sf(u)).ln_1p()
    } else {
        cdf(u).ln()
    }
}

/// `ln(Phi(b) - Phi(a))` for `a < b`, without cancellation in either tail.
pub fn ln_cdf_diff(a: f64, b: f64) -> f64 {
    if a >= b {
        return f64::NEG_INFINITY;
    }
    if a > 0.0 {
        // both in the upper tail: Phi(-a) - Phi(-b)
        let hi = ln_cdf(-a);
        let lo = ln_cdf(-b);
        hi + (-(lo - hi).exp()).ln_1p()
    } else if b < 0.0 {
        let hi = ln_cdf(b);
        let lo = ln_cdf(a);
        hi + (-(lo - hi).exp()).ln_1p()
    } else {
        (1.0 - sf(b) - cdf(a)).ln()
    }
}

/// `Phi^{-1}(p)` for `p` in `(0, 1)`.
pub fn inv_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        SQRT_2 * erfc_inv(2.0 * (1.0 - p))
    } else {
        -SQRT_2 * erfc_inv(2.0 * p)
    }
}

/// Inverse of the upper tail: the `u` with `1 - Phi(u) = q`.
pub fn inv_sf(q: f64) -> f64 {
    if q <= 0.0 {
        return f64::INFINITY;
    }
    if q >= 1.0 {
        return f64::NEG_INFINITY;
    }
    SQRT_2 * erfc_inv(2.0 * q)
}
