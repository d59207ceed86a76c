//! Gaussian machinery: normal CDF/quantiles, truncated sampling, conditioning
//! formulas, multivariate sampling and OU transition moments.

pub mod linalg;
pub mod mvn;
pub mod normal;
pub mod ou;
pub mod truncated;

use thiserror::Error;

pub use mvn::{conditional_mvn_given_one, conditional_posterior_y, sample_mvn};
pub use ou::{ou_covariance, ou_transition, OuTransition};
pub use truncated::{sample_truncated_normal, TruncationSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussianError {
    #[error("operation requires OU spread dynamics but the model uses IID spreads")]
    WrongSpreadMode,
    #[error("time step must be positive and finite, got {0}")]
    NonPositiveTime(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("truncation interval ({lower}, {upper}) is empty")]
    EmptyInterval { lower: f64, upper: f64 },
    #[error("variance must be positive and finite, got {0}")]
    NonPositiveVariance(f64),
    #[error("state and observation variances are both zero")]
    DegenerateBoth,
    #[error("conditioning on one coordinate needs at least two bonds, got {0}")]
    WrongDimension(usize),
    #[error("bond index {bond} out of range for {d} bonds")]
    BondOutOfRange { bond: usize, d: usize },
}
