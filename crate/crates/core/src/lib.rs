//! Particle filtering of corporate-bond mid yields and half bid-ask spreads
//! from censored dealer observations.

pub mod cli;
pub mod estimate;
pub mod filter;
pub mod gaussian;
pub mod io;
pub mod model;
pub mod par;
pub mod rng;
pub mod sim;

pub use filter::{init, FilterDiagnostics, FilterError, FilterOptions, ParticleCloud, PosteriorSummary};
pub use model::{
    validate_params, BondUniverse, EventKind, ModelParams, ObservationEvent, Prior, SpreadModel, ValidatedModel,
};
pub use par::Execution;
