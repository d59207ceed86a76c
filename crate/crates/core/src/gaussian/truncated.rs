//! Exact sampling from one- and two-sided truncated normal laws.
//!
//! Regimes, after standardizing and reflecting so the kept mass sits on the
//! right of the origin:
//! - lower cut beyond [`TAIL_CUT`]: Marsaglia's tail method, or a uniform
//!   proposal when the interval is short relative to `1/cut`;
//! - short intervals elsewhere: uniform proposal with Gaussian acceptance;
//! - everything else: inversion, split at the origin so each side is inverted
//!   through its own tail.

use rand::distr::Open01;
use rand::Rng;

use super::normal::{cdf, inv_cdf, inv_sf, sf};
use super::GaussianError;

/// Standardized cut beyond which inversion gives way to accept/reject.
pub const TAIL_CUT: f64 = 3.0;
/// Standardized width under which a uniform proposal is used.
const NARROW_WIDTH: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationSpec {
    /// Keep `v > a`.
    Above(f64),
    /// Keep `v < b`.
    Below(f64),
    /// Keep `a < v < b`.
    Between(f64, f64),
}

impl TruncationSpec {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            TruncationSpec::Above(a) => (a, f64::INFINITY),
            TruncationSpec::Below(b) => (f64::NEG_INFINITY, b),
            TruncationSpec::Between(a, b) => (a, b),
        }
    }
}

/// One draw of `N(mu, var)` conditioned on `spec`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mu: f64,
    var: f64,
    spec: TruncationSpec,
    rng: &mut R,
) -> Result<f64, GaussianError> {
    let (a, b) = spec.bounds();
    if a.is_nan() || b.is_nan() || a >= b {
        return Err(GaussianError::EmptyInterval { lower: a, upper: b });
    }
    if !(var > 0.0 && var.is_finite()) {
        return Err(GaussianError::NonPositiveVariance(var));
    }
    let sd = var.sqrt();
    let z = standard_truncated((a - mu) / sd, (b - mu) / sd, rng)?;
    Ok((mu + sd * z).clamp(a, b))
}

/// One draw of `N(0, 1)` restricted to `(lo, hi)`.
pub fn standard_truncated<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> Result<f64, GaussianError> {
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(GaussianError::EmptyInterval { lower: lo, upper: hi });
    }
    // reflect so that lo >= 0 or lo < 0 < hi
    if hi <= 0.0 {
        return Ok(-right_leaning(-hi, -lo, rng));
    }
    Ok(right_leaning(lo, hi, rng))
}

fn right_leaning<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    let width = hi - lo;
    let x = if lo >= TAIL_CUT {
        if width * lo < 1.0 {
            uniform_proposal(lo, hi, lo, rng)
        } else {
            marsaglia_tail(lo, hi, rng)
        }
    } else if width < NARROW_WIDTH {
        let closest = if lo >= 0.0 { lo } else { 0.0 };
        uniform_proposal(lo, hi, closest, rng)
    } else {
        inversion(lo, hi, rng)
    };
    x.clamp(lo, hi)
}

/// Uniform proposal on `[lo, hi]`, accepted with `exp((c^2 - x^2)/2)` where `c`
/// is the point of the interval closest to the origin.
fn uniform_proposal<R: Rng + ?Sized>(lo: f64, hi: f64, closest: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.sample(Open01);
        let x = lo + u * (hi - lo);
        let v: f64 = rng.sample(Open01);
        if v.ln() <= 0.5 * (closest * closest - x * x) {
            return x;
        }
    }
}

/// Marsaglia's tail method for `x > lo`, rejecting draws above `hi`.
fn marsaglia_tail<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.sample(Open01);
        let u2: f64 = rng.sample(Open01);
        let x = (lo * lo - 2.0 * u1.ln()).sqrt();
        if u2 * x <= lo && x <= hi {
            return x;
        }
    }
}

fn inversion<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    if lo >= 0.0 {
        let q_lo = sf(lo);
        let q_hi = sf(hi);
        return inv_sf(q_hi + u * (q_lo - q_hi));
    }
    // lo < 0 < hi: invert each half through its own tail
    let p_lo = cdf(lo);
    let q_hi = sf(hi);
    let left = 0.5 - p_lo;
    let right = 0.5 - q_hi;
    let v = u * (left + right);
    if v < left {
        inv_cdf(p_lo + v)
    } else {
        inv_sf(q_hi + (right - (v - left)))
    }
}
