//! Job assignment to a Markov machine under the age-of-job-completion
//! metric.
//!
//! A central server keeps one queue per user and, at the beginning of a
//! slot, may pay to sample the state of a machine that alternates between
//! *free* and *internally busy* according to a symmetric two-state chain.
//! When a sample finds the machine free, a job from one of the non-empty
//! queues is assigned. The crate provides
//!
//! * [`sim`]: an exact slot-level simulator (open or saturated mode),
//! * [`analytics`]: closed-form ages and sampling costs of backlogged
//!   subsystems,
//! * [`stability`]: sufficient stability conditions plus an empirical drift
//!   cross-check,
//! * [`optimizer`]: per-subset policy design and assembly of the adaptive
//!   policy tables.

pub mod analytics;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod sim;
pub mod stability;

pub use error::{Error, Result};
pub use model::{
    active_set, enumerate_subsets, validate_params, validate_params_allow_zero_arrivals,
    AdaptivePolicy, RawParams, SchedulerKind, SubsetKey, SubsetPolicy, SystemParams,
    DEFAULT_SUBSET_CAP,
};
pub use rng::RngContract;
pub use sim::{run, Mode, SimConfig, SimMetrics, Simulator, Verdict};
