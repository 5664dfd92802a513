use thiserror::Error;

/// Errors raised while building, validating, sampling or (de)serializing a model.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model has no states")]
    Empty,
    #[error("state {0} has no feasible actions")]
    NoFeasibleActions(usize),
    #[error("action {action} is not feasible in state {state}")]
    InfeasibleAction { state: usize, action: usize },
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("transition row ({state}, {action}) sums to {sum}, expected 1")]
    RowSum { state: usize, action: usize, sum: f64 },
    #[error("invalid probability {p} for ({state}, {action}) -> {next}")]
    BadProbability { state: usize, action: usize, next: usize, p: f64 },
    #[error("invalid cost distribution: {0}")]
    BadDistribution(String),
    #[error("expected {expected} constraint costs, got {got}")]
    ConstraintCount { expected: usize, got: usize },
    #[error("invalid threshold: {0}")]
    BadThreshold(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid features: {0}")]
    Features(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failures of the exact-solution oracles.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("induced chain is not ergodic: {0}")]
    Ergodicity(String),
    #[error("A is not negative definite (max eigenvalue of symmetric part {max_eig:e})")]
    NotNegativeDefinite { max_eig: f64 },
    #[error("TD fixed point system is inconsistent (residual {residual:e})")]
    Inconsistent { residual: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Fatal conditions inside a learner run.
#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("non-finite {quantity} at iteration {t}")]
    NonFinite { t: u64, quantity: &'static str },
    #[error("invalid step schedule: {0}")]
    Schedule(String),
    #[error("invalid projection spec: {0}")]
    Projection(String),
    #[error("Fisher matrix lost positive definiteness at iteration {t}")]
    FisherNotPositiveDefinite { t: u64 },
    #[error("natural actor-critic step requires a Fisher estimate")]
    MissingFisher,
    #[error("learner state inconsistent with model: {0}")]
    Dimension(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
