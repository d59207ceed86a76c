//! Per-particle likelihood multipliers for the five observation kinds, in log space.

use crate::gaussian::normal::{ln_cdf, ln_cdf_diff, ln_pdf};
use crate::model::EventKind;

/// Log-likelihood multiplier of one particle.
///
/// `y_prev` is the particle's mid before the event, `psi` its freshly drawn
/// half-spread for the observed bond, and `s` the predictive standard
/// deviation `sqrt(sigma^2 dt + sigma_eps^2)`.
pub fn log_multiplier(kind: &EventKind, y_prev: f64, psi: f64, s: f64) -> f64 {
    let v = match *kind {
        EventKind::ClientBuy { traded } => ln_pdf((traded + psi - y_prev) / s),
        EventKind::ClientSell { traded } => ln_pdf((traded - psi - y_prev) / s),
        // our quote lost: the client's trade yield was at least the quote
        EventKind::TradedAwayBuy { quote } => ln_cdf(-(quote + psi - y_prev) / s),
        EventKind::TradedAwaySell { quote } => ln_cdf((quote - psi - y_prev) / s),
        EventKind::InterDealer { traded, alpha } => {
            ln_cdf_diff((traded - alpha - y_prev) / s, (traded + alpha - y_prev) / s)
        }
    };
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Normalized importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub log_w: Vec<f64>,
    pub norm_w: Vec<f64>,
    pub ess: f64,
}

impl WeightVector {
    /// Normalizes after subtracting the largest log-weight. `None` when every
    /// weight is zero.
    pub fn from_log(log_w: Vec<f64>) -> Option<Self> {
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY || max.is_nan() {
            return None;
        }
        let mut norm_w: Vec<f64> = log_w.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = norm_w.iter().sum();
        norm_w.iter_mut().for_each(|w| *w /= total);
        let ess = 1.0 / norm_w.iter().map(|w| w * w).sum::<f64>();
        Some(Self {
            log_w,
            norm_w,
            ess: ess.clamp(1.0, f64::INFINITY),
        })
    }

    pub fn len(&self) -> usize {
        self.log_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }
}
