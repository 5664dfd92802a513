//! Finite constrained MDPs with random per-transition costs.
//!
//! A [`TabularCmdp`] stores, for every state `s` and feasible action `a`, the
//! list of possible successors `s'` with their probability and the laws of the
//! running cost `q` and of the `N` constraint costs `h_k` observed on that
//! transition. Learners only ever touch a model through [`TabularCmdp::sample_step`];
//! the expected costs `d(s, a)` and `h_k(s, a)` are available to the oracles.
//!
//! Actions are identified by a global index in `0..n_actions`. Each state keeps
//! its feasible actions in a fixed order, and per-state vectors (action
//! probabilities, expected costs) are indexed by position in that order, which
//! is called the *local* action index.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Tolerance for transition rows and categorical probabilities summing to one.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Law of a single non-negative cost observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostDistribution {
    Deterministic { value: f64 },
    /// Uniform over the integers `lo..=hi`.
    DiscreteUniformInt { lo: i64, hi: i64 },
    Categorical { values: Vec<f64>, probs: Vec<f64> },
}

impl CostDistribution {
    pub fn deterministic(value: f64) -> Self {
        CostDistribution::Deterministic { value }
    }

    pub fn uniform_int(lo: i64, hi: i64) -> Self {
        CostDistribution::DiscreteUniformInt { lo, hi }
    }

    pub fn categorical(values: Vec<f64>, probs: Vec<f64>) -> Self {
        CostDistribution::Categorical { values, probs }
    }

    pub fn mean(&self) -> f64 {
        match self {
            CostDistribution::Deterministic { value } => *value,
            CostDistribution::DiscreteUniformInt { lo, hi } => (*lo as f64 + *hi as f64) / 2.0,
            CostDistribution::Categorical { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| v * p).sum()
            }
        }
    }

    /// Smallest and largest value in the support.
    pub fn support_bounds(&self) -> (f64, f64) {
        match self {
            CostDistribution::Deterministic { value } => (*value, *value),
            CostDistribution::DiscreteUniformInt { lo, hi } => (*lo as f64, *hi as f64),
            CostDistribution::Categorical { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, &p)| p > 0.0)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
                    (lo.min(v), hi.max(v))
                }),
        }
    }

    /// Draws one observation. Deterministic costs consume no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CostDistribution::Deterministic { value } => *value,
            CostDistribution::DiscreteUniformInt { lo, hi } => rng.random_range(*lo..=*hi) as f64,
            CostDistribution::Categorical { values, probs } => {
                values[sample_index(probs, rng.random::<f64>())]
            }
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::BadDistribution(msg));
        match self {
            CostDistribution::Deterministic { value } => {
                if !value.is_finite() || *value < 0.0 {
                    return bad(format!("deterministic cost {value} must be finite and >= 0"));
                }
            }
            CostDistribution::DiscreteUniformInt { lo, hi } => {
                if lo > hi || *lo < 0 {
                    return bad(format!("uniform integer range [{lo}, {hi}] must satisfy 0 <= lo <= hi"));
                }
            }
            CostDistribution::Categorical { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return bad("categorical needs equally many values and probs".into());
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return bad("categorical values must be finite and >= 0".into());
                }
                if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad("categorical probabilities must lie in [0, 1]".into());
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return bad(format!("categorical probabilities sum to {sum}"));
                }
            }
        }
        Ok(())
    }
}

/// Inverse-CDF draw from a probability vector given `u ~ U[0, 1)`.
///
/// Falls back to the last positive entry when rounding leaves `u` past the
/// cumulative total.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// One possible successor of a state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub cost: CostDistribution,
    pub constraints: Vec<CostDistribution>,
}

/// Result of one simulated transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub cost: f64,
    pub constraint_costs: Vec<f64>,
}

/// A finite average-cost CMDP.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCmdp {
    n_actions: usize,
    feasible: Vec<Vec<usize>>,
    outcomes: Vec<Vec<Vec<Outcome>>>,
    alphas: Vec<f64>,
    cost_bound: f64,
    initial_state: usize,
    expected_cost: Vec<Vec<f64>>,
    expected_constraints: Vec<Vec<Vec<f64>>>,
}

impl TabularCmdp {
    pub fn n_states(&self) -> usize {
        self.feasible.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_constraints(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `U_c`: every cost sample lies in `[0, cost_bound]`.
    pub fn cost_bound(&self) -> f64 {
        self.cost_bound
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// Feasible global action ids of `s`, in local order.
    pub fn feasible_actions(&self, s: usize) -> &[usize] {
        &self.feasible[s]
    }

    pub fn local_action(&self, s: usize, action: usize) -> Option<usize> {
        self.feasible.get(s)?.iter().position(|&a| a == action)
    }

    /// Successors of `(s, local action)`.
    pub fn outcomes(&self, s: usize, local: usize) -> &[Outcome] {
        &self.outcomes[s][local]
    }

    /// `d(s, a)`, indexed by local action.
    pub fn expected_cost(&self, s: usize, local: usize) -> f64 {
        self.expected_cost[s][local]
    }

    /// `h_k(s, a)` for all k, indexed by local action.
    pub fn expected_constraints(&self, s: usize, local: usize) -> &[f64] {
        &self.expected_constraints[s][local]
    }

    /// `p(s, a, s')` for a global action id; zero for infeasible pairs.
    pub fn transition_prob(&self, s: usize, action: usize, next: usize) -> f64 {
        match self.local_action(s, action) {
            Some(local) => self.outcomes[s][local]
                .iter()
                .filter(|o| o.next == next)
                .map(|o| o.prob)
                .sum(),
            None => 0.0,
        }
    }

    /// Total number of feasible state-action pairs.
    pub fn n_pairs(&self) -> usize {
        self.feasible.iter().map(Vec::len).sum()
    }

    /// Samples `(s', q, h)` for a feasible global action `action` in state `s`.
    pub fn sample_step<R: Rng + ?Sized>(
        &self,
        s: usize,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition, ModelError> {
        if s >= self.n_states() {
            return Err(ModelError::OutOfRange(format!("state {s}")));
        }
        let local = self
            .local_action(s, action)
            .ok_or(ModelError::InfeasibleAction { state: s, action })?;
        Ok(self.sample_local(s, local, rng))
    }

    /// Same as [`Self::sample_step`] with a local action index known to be valid.
    pub fn sample_local<R: Rng + ?Sized>(&self, s: usize, local: usize, rng: &mut R) -> Transition {
        let outcomes = &self.outcomes[s][local];
        let u = rng.random::<f64>();
        let mut acc = 0.0;
        let mut chosen = outcomes.len() - 1;
        for (i, o) in outcomes.iter().enumerate() {
            acc += o.prob;
            if u < acc {
                chosen = i;
                break;
            }
        }
        let o = &outcomes[chosen];
        let cost = o.cost.sample(rng);
        let constraint_costs = o.constraints.iter().map(|d| d.sample(rng)).collect();
        Transition { next: o.next, cost, constraint_costs }
    }

    /// Checks that the union of feasible transitions forms an irreducible,
    /// aperiodic graph. Any softmax policy puts positive mass on every feasible
    /// action, so this is exactly ergodicity of every induced chain.
    pub fn structural_ergodicity(&self) -> Result<(), String> {
        let n = self.n_states();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
        for s in 0..n {
            for outs in &self.outcomes[s] {
                for o in outs.iter().filter(|o| o.prob > 0.0) {
                    succ[s].push(o.next);
                    pred[o.next].push(s);
                }
            }
        }
        let levels = bfs_levels(&succ, 0);
        if let Some(s) = levels.iter().position(Option::is_none) {
            return Err(format!("state {s} is unreachable from state 0"));
        }
        if let Some(s) = bfs_levels(&pred, 0).iter().position(Option::is_none) {
            return Err(format!("state 0 is unreachable from state {s}"));
        }
        let mut period = 0usize;
        for s in 0..n {
            let ls = levels[s].unwrap();
            for &t in &succ[s] {
                let lt = levels[t].unwrap();
                period = gcd(period, (ls + 1).abs_diff(lt));
            }
        }
        if period != 1 {
            return Err(format!("chain is periodic with period {period}"));
        }
        Ok(())
    }
}

fn bfs_levels(adj: &[Vec<usize>], root: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    let mut queue = std::collections::VecDeque::from([root]);
    level[root] = Some(0);
    while let Some(u) = queue.pop_front() {
        let lu = level[u].unwrap();
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = Some(lu + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Incremental constructor for [`TabularCmdp`].
#[derive(Debug, Clone)]
pub struct CmdpBuilder {
    n_actions: usize,
    n_constraints: usize,
    feasible: Vec<Vec<usize>>,
    outcomes: Vec<Vec<Vec<Outcome>>>,
    alphas: Vec<f64>,
    cost_bound: Option<f64>,
    initial_state: usize,
}

impl CmdpBuilder {
    /// All actions start out feasible in every state.
    pub fn new(n_states: usize, n_actions: usize, n_constraints: usize) -> Self {
        CmdpBuilder {
            n_actions,
            n_constraints,
            feasible: vec![(0..n_actions).collect(); n_states],
            outcomes: vec![vec![Vec::new(); n_actions]; n_states],
            alphas: vec![0.0; n_constraints],
            cost_bound: None,
            initial_state: 0,
        }
    }

    /// Restricts `A(s)`. Must be called before adding transitions for `s`.
    pub fn feasible_actions(mut self, s: usize, actions: Vec<usize>) -> Self {
        self.outcomes[s] = vec![Vec::new(); actions.len()];
        self.feasible[s] = actions;
        self
    }

    pub fn alphas(mut self, alphas: Vec<f64>) -> Self {
        self.alphas = alphas;
        self
    }

    pub fn cost_bound(mut self, u_c: f64) -> Self {
        self.cost_bound = Some(u_c);
        self
    }

    pub fn initial_state(mut self, s: usize) -> Self {
        self.initial_state = s;
        self
    }

    /// Adds `p(s, action, next) = prob` with the given cost laws. Repeated
    /// successors are kept as separate outcomes.
    pub fn transition(
        &mut self,
        s: usize,
        action: usize,
        next: usize,
        prob: f64,
        cost: CostDistribution,
        constraints: Vec<CostDistribution>,
    ) -> Result<&mut Self, ModelError> {
        if s >= self.feasible.len() || next >= self.feasible.len() {
            return Err(ModelError::OutOfRange(format!("transition {s} -> {next}")));
        }
        let local = self.feasible[s]
            .iter()
            .position(|&a| a == action)
            .ok_or(ModelError::InfeasibleAction { state: s, action })?;
        if !(0.0..=1.0).contains(&prob) {
            return Err(ModelError::BadProbability { state: s, action, next, p: prob });
        }
        if constraints.len() != self.n_constraints {
            return Err(ModelError::ConstraintCount {
                expected: self.n_constraints,
                got: constraints.len(),
            });
        }
        self.outcomes[s][local].push(Outcome { next, prob, cost, constraints });
        Ok(self)
    }

    pub fn build(self) -> Result<TabularCmdp, ModelError> {
        let n = self.feasible.len();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        if self.initial_state >= n {
            return Err(ModelError::OutOfRange(format!("initial state {}", self.initial_state)));
        }
        if self.alphas.len() != self.n_constraints {
            return Err(ModelError::ConstraintCount {
                expected: self.n_constraints,
                got: self.alphas.len(),
            });
        }
        if let Some(a) = self.alphas.iter().find(|a| !a.is_finite() || **a <= 0.0) {
            return Err(ModelError::BadThreshold(format!("alpha {a} must be finite and > 0")));
        }
        let mut max_support: f64 = 0.0;
        for (s, actions) in self.feasible.iter().enumerate() {
            if actions.is_empty() {
                return Err(ModelError::NoFeasibleActions(s));
            }
            let mut seen = vec![false; self.n_actions];
            for &a in actions {
                if a >= self.n_actions || std::mem::replace(&mut seen[a], true) {
                    return Err(ModelError::OutOfRange(format!("action {a} in state {s}")));
                }
            }
            for (local, outs) in self.outcomes[s].iter().enumerate() {
                let sum: f64 = outs.iter().map(|o| o.prob).sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(ModelError::RowSum { state: s, action: actions[local], sum });
                }
                for o in outs {
                    o.cost.validate()?;
                    max_support = max_support.max(o.cost.support_bounds().1);
                    for d in &o.constraints {
                        d.validate()?;
                        max_support = max_support.max(d.support_bounds().1);
                    }
                }
            }
        }
        let cost_bound = match self.cost_bound {
            Some(u) if u < max_support => {
                return Err(ModelError::BadDistribution(format!(
                    "cost support reaches {max_support} above the bound {u}"
                )))
            }
            Some(u) => u,
            None => max_support,
        };

        let expected_cost = self
            .outcomes
            .iter()
            .map(|per_s| {
                per_s
                    .iter()
                    .map(|outs| outs.iter().map(|o| o.prob * o.cost.mean()).sum())
                    .collect()
            })
            .collect();
        let expected_constraints = self
            .outcomes
            .iter()
            .map(|per_s| {
                per_s
                    .iter()
                    .map(|outs| {
                        (0..self.n_constraints)
                            .map(|k| outs.iter().map(|o| o.prob * o.constraints[k].mean()).sum())
                            .collect()
                    })
                    .collect()
            })
            .collect();

        Ok(TabularCmdp {
            n_actions: self.n_actions,
            feasible: self.feasible,
            outcomes: self.outcomes,
            alphas: self.alphas,
            cost_bound,
            initial_state: self.initial_state,
            expected_cost,
            expected_constraints,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain() -> TabularCmdp {
        let mut b = CmdpBuilder::new(2, 1, 1).alphas(vec![1.0]);
        b.transition(0, 0, 1, 1.0, CostDistribution::deterministic(2.0), vec![CostDistribution::deterministic(1.0)])
            .unwrap();
        b.transition(1, 0, 0, 1.0, CostDistribution::uniform_int(2, 4), vec![CostDistribution::deterministic(0.0)])
            .unwrap();
        b.build().unwrap()
    }

    #[test]
    fn deterministic_step() {
        let m = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = m.sample_step(0, 0, &mut rng).unwrap();
        assert_eq!(tr, Transition { next: 1, cost: 2.0, constraint_costs: vec![1.0] });
    }

    #[test]
    fn infeasible_action_rejected() {
        let m = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            m.sample_step(0, 3, &mut rng),
            Err(ModelError::InfeasibleAction { state: 0, action: 3 })
        ));
    }

    #[test]
    fn uniform_int_empirical_mean() {
        let d = CostDistribution::uniform_int(2, 4);
        assert_eq!(d.mean(), 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = d.sample(&mut rng);
            assert!((2.0..=4.0).contains(&x));
            sum += x;
        }
        assert!((sum / n as f64 - 3.0).abs() < 0.02);
    }

    #[test]
    fn categorical_mean_and_support() {
        let d = CostDistribution::categorical(vec![0.0, 1.0, 5.0], vec![0.5, 0.25, 0.25]);
        d.validate().unwrap();
        assert_eq!(d.mean(), 1.5);
        assert_eq!(d.support_bounds(), (0.0, 5.0));
        let bad = CostDistribution::categorical(vec![0.0, 1.0], vec![0.5, 0.4]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn row_sum_enforced() {
        let mut b = CmdpBuilder::new(2, 1, 0);
        b.transition(0, 0, 1, 0.5, CostDistribution::deterministic(0.0), vec![]).unwrap();
        b.transition(1, 0, 0, 1.0, CostDistribution::deterministic(0.0), vec![]).unwrap();
        assert!(matches!(b.build(), Err(ModelError::RowSum { state: 0, .. })));
    }

    #[test]
    fn empty_feasible_set_rejected() {
        let b = CmdpBuilder::new(1, 2, 0).feasible_actions(0, vec![]);
        assert!(matches!(b.build(), Err(ModelError::NoFeasibleActions(0))));
    }

    #[test]
    fn cost_bound_checked() {
        let mut b = CmdpBuilder::new(1, 1, 0).cost_bound(3.0);
        b.transition(0, 0, 0, 1.0, CostDistribution::uniform_int(2, 4), vec![]).unwrap();
        assert!(b.build().is_err());
    }

    #[test]
    fn periodic_and_reducible_chains_detected() {
        // 0 <-> 1 deterministic flip: period 2
        let m = chain();
        assert!(m.structural_ergodicity().unwrap_err().contains("period"));

        let mut b = CmdpBuilder::new(2, 1, 0);
        b.transition(0, 0, 0, 1.0, CostDistribution::deterministic(0.0), vec![]).unwrap();
        b.transition(1, 0, 1, 1.0, CostDistribution::deterministic(0.0), vec![]).unwrap();
        assert!(b.build().unwrap().structural_ergodicity().is_err());
    }
}
