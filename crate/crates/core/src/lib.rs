//! Re-identification attacks on location check-in data.
//!
//! Users are modelled as smoothed multinomials over venues; an anonymous
//! set of check-ins is attributed to the user with the highest posterior.
//! Attacks are restricted to venue classes (category, popularity percentile,
//! spatial-isolation percentile) and repeated over seeded train/test splits
//! to measure how identifying each class is.
//!
//! Modules, bottom up:
//!
//! - [`ingest`]: file parsing, region labelling, activity filters
//! - [`geo`]: haversine distance and nearest-neighbour search
//! - [`features`]: venue popularity/isolation and venue classes
//! - [`attack`]: user models and MAP identification
//! - [`eval`]: the repeated experiment, sweeps, entropy and correlation
//! - [`synth`]: seeded synthetic datasets
//! - [`report`]: CSV and JSON outputs

pub mod attack;
pub mod eval;
pub mod features;
pub mod geo;
pub mod ingest;
pub mod report;
pub mod synth;

use thiserror::Error;

pub use attack::{
    build_user_model, log_likelihood, Identification, ModelBank, UserModel, Vocabulary,
};
pub use eval::{run_experiment, AttackResult, ExperimentConfig};
pub use features::{Direction, Metric, VenueClassSpec};
pub use ingest::{CheckIn, Dataset, Taxonomy, Venue};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Feature(#[from] features::FeatureError),
    #[error(transparent)]
    Attack(#[from] attack::AttackError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Stats(#[from] eval::StatsError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Process exit codes shared by the CLI and the C ABI.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INPUT_VALIDATION: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
    pub const IO: i32 = 4;
}

impl Error {
    /// 2 for invalid input, 3 when an experiment cannot be run, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        use eval::EvalError;
        match self {
            Error::Io(_) => exit::IO,
            Error::Ingest(ingest::IngestError::Io(_)) => exit::IO,
            Error::Eval(EvalError::NoEligibleUsers { .. }) => exit::INFEASIBLE,
            Error::Eval(EvalError::Feature(features::FeatureError::TooFewVenues(_))) => {
                exit::INFEASIBLE
            }
            Error::Feature(features::FeatureError::TooFewVenues(_)) => exit::INFEASIBLE,
            Error::Synth(_) => exit::INFEASIBLE,
            Error::Stats(_) => exit::INFEASIBLE,
            _ => exit::INPUT_VALIDATION,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
