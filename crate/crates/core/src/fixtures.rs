//! Small reference CMDPs with known-good critic features.
//!
//! Every fixture has one constraint, an ergodic chain under every softmax
//! policy, and critic features whose span excludes the constant vector, so
//! the TD matrix `A` is negative definite.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::StateFeatures;
use crate::mdp::{CmdpBuilder, CostDistribution, TabularCmdp};
use crate::policy::{PolicyClass, SoftmaxPolicy};

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub model: TabularCmdp,
    pub state_features: StateFeatures,
}

impl Fixture {
    pub fn policy_class(&self) -> Arc<PolicyClass> {
        Arc::new(PolicyClass::tabular(&self.model))
    }

    /// Tabular policy with `θ_i ~ U[−1, 1)` drawn from `seed`.
    pub fn random_policy(&self, seed: u64) -> SoftmaxPolicy {
        let class = self.policy_class();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = (0..class.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        SoftmaxPolicy::new(class, theta)
    }
}

pub const NAMES: [&str; 3] = ["two_state", "three_state", "five_state"];

pub fn by_name(name: &str) -> Option<Fixture> {
    match name {
        "two_state" => Some(two_state()),
        "three_state" => Some(three_state()),
        "five_state" => Some(five_state()),
        _ => None,
    }
}

pub fn all() -> Vec<Fixture> {
    vec![two_state(), three_state(), five_state()]
}

fn det(x: f64) -> CostDistribution {
    CostDistribution::deterministic(x)
}

/// (s, a, s', p, cost, constraint)
type Row = (usize, usize, usize, f64, CostDistribution, CostDistribution);

fn build(n: usize, n_actions: usize, alpha: f64, feasible: &[(usize, Vec<usize>)], rows: Vec<Row>) -> TabularCmdp {
    let mut b = CmdpBuilder::new(n, n_actions, 1).alphas(vec![alpha]);
    for (s, acts) in feasible {
        b = b.feasible_actions(*s, acts.clone());
    }
    for (s, a, next, p, q, h) in rows {
        b.transition(s, a, next, p, q, vec![h]).expect("fixture transition");
    }
    b.build().expect("fixture model")
}

/// Two states, two actions, deterministic `(s, a, s')`-dependent costs.
pub fn two_state() -> Fixture {
    let rows = vec![
        (0, 0, 0, 0.7, det(1.0), det(2.0)),
        (0, 0, 1, 0.3, det(2.0), det(2.0)),
        (0, 1, 0, 0.2, det(3.0), det(0.0)),
        (0, 1, 1, 0.8, det(3.0), det(0.0)),
        (1, 0, 0, 0.6, det(0.5), det(1.0)),
        (1, 0, 1, 0.4, det(0.5), det(1.0)),
        (1, 1, 0, 0.1, det(2.0), det(0.5)),
        (1, 1, 1, 0.9, det(2.0), det(0.0)),
    ];
    Fixture {
        name: "two_state",
        model: build(2, 2, 0.8, &[], rows),
        state_features: StateFeatures::from_dense_rows(vec![vec![1.0], vec![0.0]]).unwrap(),
    }
}

/// Three states, two actions, random integer and categorical costs.
///
/// Action 0 is cheap but loads the constraint, action 1 is the safe detour.
pub fn three_state() -> Fixture {
    let u = CostDistribution::uniform_int;
    let cat = CostDistribution::categorical;
    let rows = vec![
        (0, 0, 1, 0.8, u(0, 2), u(1, 3)),
        (0, 0, 0, 0.2, u(0, 2), u(1, 3)),
        (0, 1, 2, 0.7, u(2, 4), det(0.0)),
        (0, 1, 0, 0.3, u(2, 4), det(0.0)),
        (1, 0, 0, 0.5, det(1.0), cat(vec![0.0, 2.0], vec![0.5, 0.5])),
        (1, 0, 2, 0.5, det(1.0), cat(vec![0.0, 2.0], vec![0.5, 0.5])),
        (1, 1, 1, 0.6, u(1, 3), det(0.0)),
        (1, 1, 2, 0.4, u(1, 3), det(0.0)),
        (2, 0, 0, 0.9, det(0.0), u(0, 2)),
        (2, 0, 2, 0.1, det(0.0), u(0, 2)),
        (2, 1, 1, 0.5, cat(vec![1.0, 3.0], vec![0.25, 0.75]), det(0.0)),
        (2, 1, 0, 0.5, cat(vec![1.0, 3.0], vec![0.25, 0.75]), det(0.0)),
    ];
    Fixture {
        name: "three_state",
        model: build(3, 2, 0.6, &[], rows),
        state_features: StateFeatures::from_dense_rows(vec![
            vec![0.8, 0.0],
            vec![0.0, 0.9],
            vec![0.3, -0.3],
        ])
        .unwrap(),
    }
}

/// Five states, up to three actions; state 3 has a single action and state 4 two.
pub fn five_state() -> Fixture {
    let u = CostDistribution::uniform_int;
    let rows = vec![
        (0, 0, 1, 0.6, det(1.0), det(0.0)),
        (0, 0, 0, 0.4, det(1.0), det(0.0)),
        (0, 1, 2, 0.5, u(0, 2), det(1.0)),
        (0, 1, 3, 0.5, u(0, 2), det(1.0)),
        (0, 2, 4, 1.0, det(2.0), det(0.5)),
        (1, 0, 2, 0.7, det(0.5), u(0, 2)),
        (1, 0, 1, 0.3, det(0.5), u(0, 2)),
        (1, 1, 0, 0.9, det(2.0), det(0.0)),
        (1, 1, 4, 0.1, det(2.0), det(0.0)),
        (1, 2, 3, 0.8, u(1, 3), det(2.0)),
        (1, 2, 1, 0.2, u(1, 3), det(2.0)),
        (2, 0, 3, 0.6, det(1.5), det(1.0)),
        (2, 0, 2, 0.4, det(1.5), det(1.0)),
        (2, 1, 4, 0.5, det(0.0), u(1, 3)),
        (2, 1, 0, 0.5, det(0.0), u(1, 3)),
        (2, 2, 1, 1.0, u(0, 4), det(0.0)),
        (3, 0, 4, 0.7, det(1.0), det(0.5)),
        (3, 0, 0, 0.3, det(1.0), det(0.5)),
        (4, 1, 0, 0.6, det(0.5), det(2.0)),
        (4, 1, 4, 0.4, det(0.5), det(2.0)),
        (4, 2, 2, 0.5, det(3.0), det(0.0)),
        (4, 2, 1, 0.5, det(3.0), det(0.0)),
    ];
    Fixture {
        name: "five_state",
        model: build(5, 3, 0.7, &[(3, vec![0]), (4, vec![1, 2])], rows),
        state_features: StateFeatures::from_dense_rows(vec![
            vec![0.5, 0.0, 0.2],
            vec![0.0, 0.6, -0.3],
            vec![0.4, 0.4, 0.0],
            vec![-0.5, 0.2, 0.6],
            vec![0.1, -0.7, 0.1],
        ])
        .unwrap(),
    }
}
