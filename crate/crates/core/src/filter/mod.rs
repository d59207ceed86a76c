//! Sequential Monte-Carlo filter for mid yields and half-spreads.

mod cloud;
mod genealogy;
pub mod resample;
pub mod summary;
pub mod weights;

use thiserror::Error;

use crate::gaussian::GaussianError;
use crate::model::{EventError, ObservationEvent, Violations};
use crate::par::Execution;

pub use cloud::{init, FilterDiagnostics, ParticleCloud};
pub use genealogy::{Path, TrajectorySample};
pub use resample::Resampling;
pub use summary::{BondSummary, Marginal, PosteriorSummary, DEFAULT_LEVELS};
pub use weights::WeightVector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("need at least 2 particles, got {0}")]
    TooFewParticles(usize),
    #[error("invalid prior: {0}")]
    InvalidPrior(Violations),
    #[error("event refers to bond {bond} but the universe has {d} bonds")]
    UnknownBond { bond: usize, d: usize },
    #[error("invalid event: {0}")]
    InvalidEvent(EventError),
    #[error("event at t={event} does not come after the filter time t={current}")]
    NonMonotoneTime { current: f64, event: f64 },
    #[error("every particle has zero likelihood for event {event:?}")]
    AllWeightsZero { event: ObservationEvent },
    #[error("requested time {requested} is before the filter time {current}")]
    TimeInPast { current: f64, requested: f64 },
    #[error("quantile levels must be strictly increasing in (0, 1): {0:?}")]
    InvalidLevels(Vec<f64>),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOptions {
    pub particles: usize,
    pub seed: u64,
    pub resampling: Resampling,
    /// Keep every event's particle states for trajectory extraction.
    pub keep_history: bool,
    pub execution: Execution,
}

impl FilterOptions {
    pub fn new(particles: usize, seed: u64) -> Self {
        Self {
            particles,
            seed,
            ..Self::default()
        }
    }

    pub fn without_history(mut self) -> Self {
        self.keep_history = false;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_resampling(mut self, resampling: Resampling) -> Self {
        self.resampling = resampling;
        self
    }
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            particles: 10_000,
            seed: 0,
            resampling: Resampling::Multinomial,
            keep_history: true,
            execution: Execution::default(),
        }
    }
}
