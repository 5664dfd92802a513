//! The C-AC and C-NAC update engines.
//!
//! One call to [`Learner::step`] performs a single sample-driven iteration:
//! draw `a ~ π_θ(·|s)`, draw `(s', q, h)`, then update the average-cost
//! estimate, critic, actor, constraint estimates and multipliers. Every
//! right-hand side uses the values from before the step. The step with `t`
//! completed iterations uses step sizes indexed by `n = t + 1`.
//!
//! Random numbers are consumed in a fixed order per step: one uniform for the
//! action, one for the successor, then the cost draws of the chosen outcome.

mod fisher;
mod mixing;
mod projection;
mod schedule;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use fisher::{FisherState, RefreshDiagnostics};
pub use mixing::{mixing_time, mixing_time_for_threshold};
pub use projection::ProjectionSpec;
pub use schedule::{StepSchedule, StepSizes};

use crate::error::LearnerError;
use crate::features::StateFeatures;
use crate::linalg::{norm, SparseVec};
use crate::mdp::{sample_index, TabularCmdp};
use crate::policy::{PolicyClass, SoftmaxPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Vanilla gradient actor.
    Cac,
    /// Natural gradient actor with a running Fisher estimate.
    Cnac,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cac => "cac",
            Algorithm::Cnac => "cnac",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Switches for diagnostic runs. A frozen actor keeps `θ` fixed so the critic
/// can be compared against a stationary target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerOptions {
    pub freeze_actor: bool,
    pub freeze_multipliers: bool,
}

/// Everything that changes during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    /// `L`, the running relaxed (Lagrangian) cost.
    pub lagrangian_est: f64,
    /// `J`, the running raw cost. Reporting only.
    pub cost_est: f64,
    /// `U_k`
    pub constraint_ests: Vec<f64>,
    /// `γ_k`
    pub multipliers: Vec<f64>,
    pub fisher: Option<FisherState>,
    /// Completed iterations.
    pub t: u64,
    pub current_state: usize,
}

impl LearnerState {
    pub fn policy(&self, class: Arc<PolicyClass>) -> SoftmaxPolicy {
        SoftmaxPolicy::new(class, self.theta.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Completed iterations before this step.
    pub t: u64,
    pub state: usize,
    pub action: usize,
    pub local_action: usize,
    pub next: usize,
    pub cost: f64,
    pub constraint_costs: Vec<f64>,
    /// `q + Σ γ_k (h_k − α_k)` with the pre-step multipliers.
    pub relaxed_cost: f64,
    pub delta: f64,
    pub step_sizes: StepSizes,
}

/// `δ = c_relaxed − L + vᵀ(f_{s'} − f_s)`
pub fn td_error(relaxed_cost: f64, lagrangian_est: f64, v: &[f64], f_s: &SparseVec, f_next: &SparseVec) -> f64 {
    relaxed_cost - lagrangian_est + f_next.dot(v) - f_s.dot(v)
}

/// Fixed ingredients of a run: model, features, schedule and projections.
#[derive(Debug, Clone)]
pub struct Learner {
    model: Arc<TabularCmdp>,
    policy_class: Arc<PolicyClass>,
    critic_features: Arc<StateFeatures>,
    algorithm: Algorithm,
    schedule: StepSchedule,
    projection: ProjectionSpec,
    options: LearnerOptions,
    fisher_init: f64,
    fisher_refresh_every: u64,
}

impl Learner {
    pub fn new(
        model: Arc<TabularCmdp>,
        policy_class: Arc<PolicyClass>,
        critic_features: Arc<StateFeatures>,
        algorithm: Algorithm,
        schedule: StepSchedule,
        projection: ProjectionSpec,
    ) -> Result<Self, LearnerError> {
        schedule.validate()?;
        projection.validate()?;
        if critic_features.n_states() != model.n_states() {
            return Err(LearnerError::Dimension(format!(
                "critic features cover {} states, model has {}",
                critic_features.n_states(),
                model.n_states()
            )));
        }
        let pf = policy_class.features();
        if pf.n_states() != model.n_states() {
            return Err(LearnerError::Dimension(format!(
                "policy features cover {} states, model has {}",
                pf.n_states(),
                model.n_states()
            )));
        }
        for s in 0..model.n_states() {
            if pf.n_actions(s) != model.feasible_actions(s).len() {
                return Err(LearnerError::Dimension(format!("policy features disagree with feasible actions of state {s}")));
            }
        }
        Ok(Learner {
            model,
            policy_class,
            critic_features,
            algorithm,
            schedule,
            projection,
            options: LearnerOptions::default(),
            fisher_init: 1.0,
            fisher_refresh_every: 1000,
        })
    }

    pub fn with_options(mut self, options: LearnerOptions) -> Self {
        self.options = options;
        self
    }

    /// `G₀ = pI` and the Cholesky refresh interval.
    pub fn with_fisher(mut self, p: f64, refresh_every: u64) -> Self {
        self.fisher_init = p;
        self.fisher_refresh_every = refresh_every;
        self
    }

    pub fn model(&self) -> &Arc<TabularCmdp> {
        &self.model
    }

    pub fn policy_class(&self) -> &Arc<PolicyClass> {
        &self.policy_class
    }

    pub fn critic_features(&self) -> &Arc<StateFeatures> {
        &self.critic_features
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    pub fn projection(&self) -> &ProjectionSpec {
        &self.projection
    }

    pub fn options(&self) -> LearnerOptions {
        self.options
    }

    /// All-zero parameters at the model's initial state.
    pub fn initial_state(&self) -> Result<LearnerState, LearnerError> {
        let k = self.model.n_constraints();
        let fisher = match self.algorithm {
            Algorithm::Cac => None,
            Algorithm::Cnac => Some(FisherState::new(self.policy_class.dim(), self.fisher_init, self.fisher_refresh_every)?),
        };
        Ok(LearnerState {
            theta: vec![0.0; self.policy_class.dim()],
            v: vec![0.0; self.critic_features.dim()],
            lagrangian_est: 0.0,
            cost_est: 0.0,
            constraint_ests: vec![0.0; k],
            multipliers: vec![0.0; k],
            fisher,
            t: 0,
            current_state: self.model.initial_state(),
        })
    }

    fn check_state(&self, st: &LearnerState) -> Result<(), LearnerError> {
        let k = self.model.n_constraints();
        if st.theta.len() != self.policy_class.dim()
            || st.v.len() != self.critic_features.dim()
            || st.constraint_ests.len() != k
            || st.multipliers.len() != k
            || st.current_state >= self.model.n_states()
        {
            return Err(LearnerError::Dimension("learner state does not match the model".into()));
        }
        Ok(())
    }

    pub fn step<R: Rng + ?Sized>(&self, st: &mut LearnerState, rng: &mut R) -> Result<StepRecord, LearnerError> {
        match self.algorithm {
            Algorithm::Cac => self.cac_step(st, rng),
            Algorithm::Cnac => self.cnac_step(st, rng),
        }
    }

    pub fn cac_step<R: Rng + ?Sized>(&self, st: &mut LearnerState, rng: &mut R) -> Result<StepRecord, LearnerError> {
        self.step_impl(st, rng, false)
    }

    pub fn cnac_step<R: Rng + ?Sized>(&self, st: &mut LearnerState, rng: &mut R) -> Result<StepRecord, LearnerError> {
        if st.fisher.is_none() {
            return Err(LearnerError::MissingFisher);
        }
        self.step_impl(st, rng, true)
    }

    /// Runs `n` steps, stopping at the first error.
    pub fn run<R: Rng + ?Sized>(&self, st: &mut LearnerState, rng: &mut R, n: u64) -> Result<(), LearnerError> {
        for _ in 0..n {
            self.step(st, rng)?;
        }
        Ok(())
    }

    fn step_impl<R: Rng + ?Sized>(
        &self,
        st: &mut LearnerState,
        rng: &mut R,
        natural: bool,
    ) -> Result<StepRecord, LearnerError> {
        self.check_state(st)?;
        let t = st.t;
        let sizes = self.schedule.step_sizes(t + 1);
        let (a, b, c) = (sizes.critic, sizes.actor, sizes.multiplier);
        let s = st.current_state;

        let probs = self.policy_class.action_probs(&st.theta, s);
        let local = sample_index(&probs, rng.random::<f64>());
        let tr = self.model.sample_local(s, local, rng);
        let alphas = self.model.alphas();

        let penalty: f64 = st
            .multipliers
            .iter()
            .zip(&tr.constraint_costs)
            .zip(alphas)
            .map(|((g, h), al)| g * (h - al))
            .sum();
        let relaxed = tr.cost + penalty;
        let f_s = self.critic_features.get(s);
        let f_next = self.critic_features.get(tr.next);
        let delta = td_error(relaxed, st.lagrangian_est, &st.v, f_s, f_next);
        if !delta.is_finite() {
            return Err(LearnerError::NonFinite { t, quantity: "TD error" });
        }

        let psi = self.policy_class.score_with_probs(s, local, &probs);
        let natural_dir = if natural && !self.options.freeze_actor {
            let dir = st.fisher.as_ref().ok_or(LearnerError::MissingFisher)?.natural_direction(&psi);
            if dir.iter().any(|x| !x.is_finite()) {
                return Err(LearnerError::NonFinite { t, quantity: "natural gradient direction" });
            }
            Some(dir)
        } else {
            None
        };

        st.lagrangian_est += a * (relaxed - st.lagrangian_est);

        f_s.axpy(a * delta, &mut st.v);
        let v_norm = self.projection.project_critic(&mut st.v);
        if !v_norm.is_finite() {
            return Err(LearnerError::NonFinite { t, quantity: "critic weights" });
        }

        if !self.options.freeze_actor {
            let finite = match &natural_dir {
                Some(dir) => {
                    for (th, d) in st.theta.iter_mut().zip(dir) {
                        *th += b * delta * d;
                    }
                    st.theta.iter().all(|x| x.is_finite())
                }
                None => {
                    psi.axpy(b * delta, &mut st.theta);
                    psi.iter().all(|(i, _)| st.theta[i].is_finite())
                }
            };
            if !finite {
                return Err(LearnerError::NonFinite { t, quantity: "policy parameters" });
            }
        }

        for k in 0..st.constraint_ests.len() {
            let u_old = st.constraint_ests[k];
            st.constraint_ests[k] += a * (tr.constraint_costs[k] - u_old);
            if !self.options.freeze_multipliers {
                st.multipliers[k] = self.projection.project_multiplier(st.multipliers[k] + c * (u_old - alphas[k]));
            }
        }

        if natural {
            if let Some(f) = st.fisher.as_mut() {
                f.update(a, &psi, t)?;
            }
        }

        st.cost_est += a * (tr.cost - st.cost_est);

        if !st.lagrangian_est.is_finite() {
            return Err(LearnerError::NonFinite { t, quantity: "average cost estimate" });
        }
        if !st.cost_est.is_finite() || st.constraint_ests.iter().any(|x| !x.is_finite()) {
            return Err(LearnerError::NonFinite { t, quantity: "constraint estimates" });
        }
        if st.multipliers.iter().any(|x| !x.is_finite()) {
            return Err(LearnerError::NonFinite { t, quantity: "Lagrange multipliers" });
        }

        st.t += 1;
        st.current_state = tr.next;
        Ok(StepRecord {
            t,
            state: s,
            action: self.model.feasible_actions(s)[local],
            local_action: local,
            next: tr.next,
            cost: tr.cost,
            constraint_costs: tr.constraint_costs,
            relaxed_cost: relaxed,
            delta,
            step_sizes: sizes,
        })
    }
}

/// `‖θ‖` and `‖v‖` of a state; convenience for reporting.
pub fn parameter_norms(st: &LearnerState) -> (f64, f64) {
    (norm(&st.theta), norm(&st.v))
}
