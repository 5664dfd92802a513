//! Softmax policies over linear action features.
//!
//! `π_θ(a|s) ∝ exp(θᵀx_{sa} / T)` with compatible features
//! `Ψ_sa = ∇_θ log π_θ(a|s) = (x_{sa} − Σ_b π_θ(b|s) x_{sb}) / T`.
//!
//! The parameterization ([`PolicyClass`]) is immutable and shared; a
//! [`SoftmaxPolicy`] pairs it with a parameter vector.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::linalg::{norm, SparseVec};
use crate::mdp::TabularCmdp;

/// How action features were constructed; recorded in policy checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// One indicator per feasible `(s, a)`; `d = Σ_s |A(s)|`.
    Tabular,
    /// Indicators for all but the last feasible action of each state, whose
    /// features are zero; `d = Σ_s (|A(s)| − 1)`. Same set of policies as
    /// `Tabular` without the per-state shift direction.
    TabularReduced,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
struct StateBlock {
    /// Sorted union of the feature supports of the state's actions.
    support: Vec<usize>,
    /// `coeffs[local][j]` is the entry of `x_{s,local}` at `support[j]`.
    coeffs: Vec<Vec<f64>>,
}

/// Action features `x_{sa}` for every feasible pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionFeatures {
    dim: usize,
    mode: FeatureMode,
    blocks: Vec<StateBlock>,
}

impl ActionFeatures {
    pub fn tabular(model: &TabularCmdp) -> Self {
        let mut next = 0;
        let blocks = (0..model.n_states())
            .map(|s| {
                let k = model.feasible_actions(s).len();
                let support: Vec<usize> = (next..next + k).collect();
                next += k;
                let coeffs = (0..k)
                    .map(|a| (0..k).map(|j| if j == a { 1.0 } else { 0.0 }).collect())
                    .collect();
                StateBlock { support, coeffs }
            })
            .collect();
        ActionFeatures { dim: next, mode: FeatureMode::Tabular, blocks }
    }

    pub fn tabular_reduced(model: &TabularCmdp) -> Self {
        let mut next = 0;
        let blocks = (0..model.n_states())
            .map(|s| {
                let k = model.feasible_actions(s).len();
                let support: Vec<usize> = (next..next + k - 1).collect();
                next += k - 1;
                let coeffs = (0..k)
                    .map(|a| (0..k - 1).map(|j| if j == a { 1.0 } else { 0.0 }).collect())
                    .collect();
                StateBlock { support, coeffs }
            })
            .collect();
        ActionFeatures { dim: next, mode: FeatureMode::TabularReduced, blocks }
    }

    pub fn from_mode(model: &TabularCmdp, mode: FeatureMode) -> Result<Self, ModelError> {
        match mode {
            FeatureMode::Tabular => Ok(Self::tabular(model)),
            FeatureMode::TabularReduced => Ok(Self::tabular_reduced(model)),
            FeatureMode::Custom => {
                Err(ModelError::Features("custom features must be given explicitly".into()))
            }
        }
    }

    /// Arbitrary dense features, `rows[s][local]` of length `dim`.
    pub fn custom(model: &TabularCmdp, dim: usize, rows: Vec<Vec<Vec<f64>>>) -> Result<Self, ModelError> {
        if rows.len() != model.n_states() {
            return Err(ModelError::Features("one feature list per state required".into()));
        }
        let mut blocks = Vec::with_capacity(rows.len());
        for (s, per_action) in rows.into_iter().enumerate() {
            if per_action.len() != model.feasible_actions(s).len() {
                return Err(ModelError::Features(format!("state {s}: one vector per feasible action")));
            }
            if per_action.iter().any(|x| x.len() != dim || x.iter().any(|v| !v.is_finite())) {
                return Err(ModelError::Features(format!("state {s}: vectors must be finite of length {dim}")));
            }
            let support: Vec<usize> =
                (0..dim).filter(|&i| per_action.iter().any(|x| x[i] != 0.0)).collect();
            let coeffs = per_action
                .iter()
                .map(|x| support.iter().map(|&i| x[i]).collect())
                .collect();
            blocks.push(StateBlock { support, coeffs });
        }
        Ok(ActionFeatures { dim, mode: FeatureMode::Custom, blocks })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn n_states(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_actions(&self, s: usize) -> usize {
        self.blocks[s].coeffs.len()
    }

    pub fn feature(&self, s: usize, local: usize) -> SparseVec {
        let b = &self.blocks[s];
        SparseVec::from_pairs(b.support.iter().copied().zip(b.coeffs[local].iter().copied()).collect())
    }

    pub fn max_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.coeffs.iter().map(|c| norm(c)))
            .fold(0.0, f64::max)
    }

    /// Adds `shift` to every `x_{sa}`; used to exercise shift invariance.
    pub fn shifted(&self, shift: &[f64]) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let coeffs = b
                    .coeffs
                    .iter()
                    .map(|c| {
                        let mut dense = shift.to_vec();
                        for (j, &i) in b.support.iter().enumerate() {
                            dense[i] += c[j];
                        }
                        dense
                    })
                    .collect();
                StateBlock { support: (0..self.dim).collect(), coeffs }
            })
            .collect();
        ActionFeatures { dim: self.dim, mode: FeatureMode::Custom, blocks }
    }
}

/// A softmax parameterization: features plus a fixed temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyClass {
    features: ActionFeatures,
    temperature: f64,
}

impl PolicyClass {
    pub fn new(features: ActionFeatures, temperature: f64) -> Result<Self, ModelError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(ModelError::Features(format!("temperature {temperature} must be positive")));
        }
        Ok(PolicyClass { features, temperature })
    }

    pub fn tabular(model: &TabularCmdp) -> Self {
        PolicyClass { features: ActionFeatures::tabular(model), temperature: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.features.dim
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn features(&self) -> &ActionFeatures {
        &self.features
    }

    /// Bound `D` on `‖Ψ_sa‖`: `2·max‖x_{sa}‖ / T`.
    pub fn score_bound(&self) -> f64 {
        2.0 * self.features.max_norm() / self.temperature
    }

    pub fn logits(&self, theta: &[f64], s: usize) -> Vec<f64> {
        let b = &self.features.blocks[s];
        b.coeffs
            .iter()
            .map(|c| c.iter().zip(&b.support).map(|(x, &i)| x * theta[i]).sum::<f64>() / self.temperature)
            .collect()
    }

    /// `π_θ(·|s)` over the local actions of `s`.
    pub fn action_probs(&self, theta: &[f64], s: usize) -> Vec<f64> {
        let mut z = self.logits(theta, s);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in z.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in z.iter_mut() {
            *v /= total;
        }
        z
    }

    /// `Ψ_sa` given precomputed `π_θ(·|s)`.
    pub fn score_with_probs(&self, s: usize, local: usize, probs: &[f64]) -> SparseVec {
        let b = &self.features.blocks[s];
        let values = (0..b.support.len())
            .map(|j| {
                let mean: f64 = probs.iter().zip(&b.coeffs).map(|(p, c)| p * c[j]).sum();
                (b.coeffs[local][j] - mean) / self.temperature
            })
            .collect();
        SparseVec { indices: b.support.clone(), values }
    }

    pub fn score(&self, theta: &[f64], s: usize, local: usize) -> SparseVec {
        let probs = self.action_probs(theta, s);
        self.score_with_probs(s, local, &probs)
    }
}

/// A policy class together with its parameters `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    class: Arc<PolicyClass>,
    theta: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn new(class: Arc<PolicyClass>, theta: Vec<f64>) -> Self {
        assert_eq!(theta.len(), class.dim(), "theta dimension mismatch");
        SoftmaxPolicy { class, theta }
    }

    pub fn zeros(class: Arc<PolicyClass>) -> Self {
        let d = class.dim();
        SoftmaxPolicy { class, theta: vec![0.0; d] }
    }

    pub fn class(&self) -> &Arc<PolicyClass> {
        &self.class
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        SoftmaxPolicy::new(self.class.clone(), theta)
    }

    pub fn action_probs(&self, s: usize) -> Vec<f64> {
        self.class.action_probs(&self.theta, s)
    }

    pub fn log_policy_gradient(&self, s: usize, local: usize) -> SparseVec {
        self.class.score(&self.theta, s, local)
    }

    pub fn checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint {
            dim: self.dim(),
            features: self.class.features.mode,
            temperature: self.class.temperature,
            theta: self.theta.clone(),
        }
    }
}

/// Serialized policy parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyCheckpoint {
    pub dim: usize,
    pub features: FeatureMode,
    pub temperature: f64,
    pub theta: Vec<f64>,
}

/// Empirical Lipschitz ratios of `π` and `∇log π` between two parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Smoothness {
    /// `max_{s,a} |π_1(a|s) − π_2(a|s)| / ‖θ_1 − θ_2‖`
    pub policy_lipschitz: f64,
    /// `max_{s,a} ‖Ψ^1_sa − Ψ^2_sa‖ / ‖θ_1 − θ_2‖`
    pub score_lipschitz: f64,
}

impl Smoothness {
    pub fn max(self, other: Smoothness) -> Smoothness {
        Smoothness {
            policy_lipschitz: self.policy_lipschitz.max(other.policy_lipschitz),
            score_lipschitz: self.score_lipschitz.max(other.score_lipschitz),
        }
    }
}

pub fn policy_smoothness_report(class: &PolicyClass, theta1: &[f64], theta2: &[f64]) -> Smoothness {
    let dist = theta1.iter().zip(theta2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if dist == 0.0 {
        return Smoothness::default();
    }
    let mut out = Smoothness::default();
    for s in 0..class.features.n_states() {
        let p1 = class.action_probs(theta1, s);
        let p2 = class.action_probs(theta2, s);
        for a in 0..p1.len() {
            out.policy_lipschitz = out.policy_lipschitz.max((p1[a] - p2[a]).abs() / dist);
            let g1 = class.score_with_probs(s, a, &p1);
            let g2 = class.score_with_probs(s, a, &p2);
            let diff = g1.values.iter().zip(&g2.values).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            out.score_lipschitz = out.score_lipschitz.max(diff / dist);
        }
    }
    out
}
