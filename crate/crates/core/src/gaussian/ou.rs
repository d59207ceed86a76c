use nalgebra::{DMatrix, DVector};

use super::GaussianError;
use crate::model::{SpreadDynamics, ValidatedModel};

/// Conditional moments of `x_{t+tau}` given `x_t` for diagonal `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuTransition {
    /// `exp(-a_i tau)`, applied entrywise to the current state.
    pub mean_factor: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `Gamma_ij(tau) = (1 - exp(-(a_i + a_j) tau)) / (a_i + a_j) * VV'_ij`.
pub fn ou_covariance(a: &DVector<f64>, vvt: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let d = a.len();
    DMatrix::from_fn(d, d, |i, j| {
        let s = a[i] + a[j];
        -(-s * tau).exp_m1() / s * vvt[(i, j)]
    })
}

pub fn ou_transition(model: &ValidatedModel, tau: f64) -> Result<OuTransition, GaussianError> {
    if !(tau > 0.0) || tau.is_nan() {
        return Err(GaussianError::NonPositiveTime(tau));
    }
    match model.spread() {
        SpreadDynamics::Ou { a, vvt, .. } => Ok(OuTransition {
            mean_factor: a.map(|ai| (-ai * tau).exp()),
            cov: ou_covariance(a, vvt, tau),
        }),
        SpreadDynamics::Iid { .. } => Err(GaussianError::WrongSpreadMode),
    }
}
