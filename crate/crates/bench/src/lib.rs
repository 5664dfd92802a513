//! Shared setup for the criterion benches.

use std::sync::Arc;

use cmdpac_core::gridworld::{build_gridworld, GridSpec};
use cmdpac_core::{
    ActionFeatures, Algorithm, FeatureMode, Learner, LearnerState, PolicyClass, ProjectionSpec, StateFeatures,
    StepSchedule, TabularCmdp,
};

pub fn grid(side: usize) -> TabularCmdp {
    build_gridworld(&GridSpec::canonical(side, 0).expect("canonical spec")).expect("grid builds")
}

/// A learner on the canonical grid with the features the harness picks by
/// default, and a state warmed up by `warmup` steps.
pub fn grid_learner(side: usize, alg: Algorithm, warmup: u64) -> (Learner, LearnerState) {
    let model = grid(side);
    let mode = match alg {
        Algorithm::Cac => FeatureMode::Tabular,
        Algorithm::Cnac => FeatureMode::TabularReduced,
    };
    let class = PolicyClass::new(ActionFeatures::from_mode(&model, mode).expect("features"), 1.0).expect("class");
    let critic = StateFeatures::one_hot_reference(model.n_states(), model.initial_state());
    let schedule = StepSchedule::new(0.01, 0.01, 0.01, 0.4, 0.6, 1.0).expect("schedule");
    let learner = Learner::new(
        Arc::new(model),
        Arc::new(class),
        Arc::new(critic),
        alg,
        schedule,
        ProjectionSpec::default(),
    )
    .expect("learner");
    let mut st = learner.initial_state().expect("state");
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    learner.run(&mut st, &mut rng, warmup).expect("warmup");
    (learner, st)
}
