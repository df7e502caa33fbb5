//! Outcome-probability estimation for autoregressive token models.
//!
//! Given a model that produces a next-token distribution for any prefix, a
//! designated outcome token and a horizon, the crate estimates the probability
//! that the outcome token is generated before the timeline ends. Three
//! unbiased estimators are provided:
//!
//! * **MC**: the fraction of sampled timelines that contain the outcome.
//! * **SCOPE**: the per-timeline sum of outcome hazards up to the outcome or
//!   the end of the timeline, computed on the same pool as MC.
//! * **REACH**: timelines are sampled with the outcome token excluded, and
//!   each contributes `1 - prod(1 - h_t)` over its recorded hazards.
//!
//! [`oracle`] holds exact references (dynamic programming and full
//! enumeration) and [`experiments`] the Markov-chain and synthetic-cohort
//! experiment suites.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod oracle;
pub mod rng;
pub mod seqmodel;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::{
    estimate, mc_sub, paired_estimates, reach_sub, scope_sub, ClipPolicy, EstimateReport,
    EstimatorKind,
};
pub use seqmodel::{
    next_distribution, restricted_distribution, sample_trajectory, HorizonPolicy, MarkovModel,
    SamplingMode, Scenario, SequenceModel, TokenId, Trajectory, Vocabulary,
};
