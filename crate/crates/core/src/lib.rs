//! Three-timescale constrained actor-critic (C-AC) and constrained natural
//! actor-critic (C-NAC) for average-cost constrained MDPs with linear
//! function approximation.
//!
//! The crate is organized bottom-up:
//!
//! - [`mdp`], [`features`], [`model_file`]: finite CMDPs with random costs,
//!   critic features and the JSON model format.
//! - [`policy`]: softmax policies with compatible features.
//! - [`oracle`], [`assumptions`]: exact solutions of small models used to
//!   verify the learners.
//! - [`learner`]: step schedules, projections, Fisher tracking and the two
//!   update engines.
//! - [`gridworld`]: the grid-world benchmark generator.
//! - [`harness`]: configuration, multi-seed runs, CSV output and diagnostics.

pub mod assumptions;
pub mod error;
pub mod features;
pub mod fixtures;
pub mod gridworld;
pub mod harness;
pub mod learner;
pub mod linalg;
pub mod mdp;
pub mod model_file;
pub mod oracle;
pub mod policy;

pub use error::{LearnerError, ModelError, OracleError};
pub use features::StateFeatures;
pub use learner::{
    Algorithm, FisherState, Learner, LearnerOptions, LearnerState, ProjectionSpec, StepRecord, StepSchedule,
};
pub use mdp::{CmdpBuilder, CostDistribution, TabularCmdp, Transition};
pub use oracle::ExactSolution;
pub use policy::{ActionFeatures, FeatureMode, PolicyClass, SoftmaxPolicy};
