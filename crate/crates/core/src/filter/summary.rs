use serde::{Deserialize, Serialize};

use super::FilterError;

/// Probability levels reported by default.
pub const DEFAULT_LEVELS: [f64; 9] = [0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub mean: f64,
    pub std: f64,
    /// One value per requested level.
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BondSummary {
    pub y: Marginal,
    pub psi: Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub time: f64,
    pub levels: Vec<f64>,
    pub bonds: Vec<BondSummary>,
}

pub fn validate_levels(levels: &[f64]) -> Result<(), FilterError> {
    let ok = levels.iter().all(|&p| p > 0.0 && p < 1.0) && levels.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(FilterError::InvalidLevels(levels.to_vec()))
    }
}

/// Linear interpolation between order statistics at rank `(n - 1) p`.
///
/// For `{1, 2, 3, 4}` the median is `2.5`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Mean, standard deviation (divisor `n`) and quantiles of `values`.
pub fn marginal(values: &mut [f64], levels: &[f64]) -> Marginal {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    values.sort_by(f64::total_cmp);
    let quantiles = levels.iter().map(|&p| quantile_sorted(values, p)).collect();
    Marginal {
        mean,
        std: var.sqrt(),
        quantiles,
    }
}

/// Summary of particle matrices stored row-major as `K x d`.
pub(crate) fn summarize(time: f64, y: &[f64], psi: &[f64], d: usize, levels: &[f64]) -> PosteriorSummary {
    let k = y.len() / d;
    let bonds = (0..d)
        .map(|i| {
            let mut ys: Vec<f64> = (0..k).map(|p| y[p * d + i]).collect();
            let mut ps: Vec<f64> = (0..k).map(|p| psi[p * d + i]).collect();
            BondSummary {
                y: marginal(&mut ys, levels),
                psi: marginal(&mut ps, levels),
            }
        })
        .collect();
    PosteriorSummary {
        time,
        levels: levels.to_vec(),
        bonds,
    }
}
