//! Square grid-world CMDPs with slippery moves, out-of-grid penalties and
//! hazard cells carrying the constraint cost.
//!
//! Cells are addressed as `(row, col)` with row 0 at the top; the state id is
//! `row·side + col`. Actions are `0 = up`, `1 = down`, `2 = left`,
//! `3 = right`, all feasible everywhere.
//!
//! Costs are per `(s, a)` and belong to the cell the agent acts from: every
//! ordinary cell has a fixed integer running cost and constraint cost drawn
//! once from `cost_seed`, an action that points off the grid pays
//! `out_of_grid_cost` instead of the running cost, hazard cells pay
//! `hazard_constraint_cost` as constraint cost, and the goal costs nothing.
//! From the goal every action returns to the start with probability one.

use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::mdp::{CmdpBuilder, CostDistribution, TabularCmdp};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const ACTION_NAMES: [&str; 4] = ["up", "down", "left", "right"];

/// Side lengths of the canonical instances.
pub const CANONICAL_SIDES: [usize; 3] = [5, 25, 40];
/// Fraction of cells that are hazards in the canonical instances.
pub const HAZARD_DENSITY: f64 = 0.1;

fn default_out_of_grid_cost() -> f64 {
    10.0
}
fn default_hazard_cost() -> f64 {
    10.0
}
fn default_cost_range() -> (i64, i64) {
    (2, 4)
}
fn default_alpha() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub side: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub hazards: Vec<(usize, usize)>,
    pub cost_seed: u64,
    #[serde(default = "default_out_of_grid_cost")]
    pub out_of_grid_cost: f64,
    #[serde(default = "default_hazard_cost")]
    pub hazard_constraint_cost: f64,
    /// Inclusive integer range of the per-cell random costs.
    #[serde(default = "default_cost_range")]
    pub cost_range: (i64, i64),
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl GridSpec {
    /// Start `(0, 0)`, goal `(n−1, n−1)`, 10% hazards on the anti-diagonal
    /// band, `α = 0.5`. Hazards and costs both derive from `cost_seed`.
    pub fn canonical(side: usize, cost_seed: u64) -> Result<Self, ModelError> {
        if side < 2 {
            return Err(ModelError::Grid(format!("side {side} < 2")));
        }
        let start = (0, 0);
        let goal = (side - 1, side - 1);
        let count = (HAZARD_DENSITY * (side * side) as f64).round() as usize;
        let hazards = anti_diagonal_hazards(side, start, goal, count, cost_seed);
        Ok(GridSpec {
            side,
            start,
            goal,
            hazards,
            cost_seed,
            out_of_grid_cost: default_out_of_grid_cost(),
            hazard_constraint_cost: default_hazard_cost(),
            cost_range: default_cost_range(),
            alpha: default_alpha(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.side * self.side
    }

    pub fn id(&self, cell: (usize, usize)) -> usize {
        cell.0 * self.side + cell.1
    }

    pub fn cell(&self, id: usize) -> (usize, usize) {
        (id / self.side, id % self.side)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.side;
        if n < 2 {
            return Err(ModelError::Grid(format!("side {n} < 2")));
        }
        let inside = |c: (usize, usize)| c.0 < n && c.1 < n;
        if !inside(self.start) || !inside(self.goal) {
            return Err(ModelError::Grid("start or goal outside the grid".into()));
        }
        if self.start == self.goal {
            return Err(ModelError::Grid("start and goal coincide".into()));
        }
        for &h in &self.hazards {
            if !inside(h) {
                return Err(ModelError::Grid(format!("hazard {h:?} outside the grid")));
            }
            if h == self.goal {
                return Err(ModelError::Grid("goal cannot be a hazard".into()));
            }
        }
        let (lo, hi) = self.cost_range;
        if lo < 0 || lo > hi {
            return Err(ModelError::Grid(format!("bad cost range {lo}..={hi}")));
        }
        if !(self.out_of_grid_cost >= 0.0 && self.hazard_constraint_cost >= 0.0) {
            return Err(ModelError::Grid("penalties must be non-negative".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(ModelError::BadThreshold(format!("alpha {} must be > 0", self.alpha)));
        }
        Ok(())
    }

    /// The cell reached by moving in `action`, if it is on the grid.
    pub fn neighbor(&self, cell: (usize, usize), action: usize) -> Option<(usize, usize)> {
        let (r, c) = cell;
        match action {
            UP if r > 0 => Some((r - 1, c)),
            DOWN if r + 1 < self.side => Some((r + 1, c)),
            LEFT if c > 0 => Some((r, c - 1)),
            RIGHT if c + 1 < self.side => Some((r, c + 1)),
            _ => None,
        }
    }

    /// Per-cell `(running cost, constraint cost)` before penalties, drawn in
    /// state-id order from `cost_seed`.
    pub fn cell_costs(&self) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cost_seed);
        let (lo, hi) = self.cost_range;
        (0..self.n_states())
            .map(|_| {
                let q = rng.random_range(lo..=hi) as f64;
                let h = rng.random_range(lo..=hi) as f64;
                (q, h)
            })
            .collect()
    }
}

/// `count` cells from the band `|r + c − (n−1)| ≤ w` around the anti-diagonal,
/// widening `w` until the band is large enough. Start and goal are excluded.
pub fn anti_diagonal_hazards(
    side: usize,
    start: (usize, usize),
    goal: (usize, usize),
    count: usize,
    seed: u64,
) -> Vec<(usize, usize)> {
    let n = side as i64;
    let eligible = |r: usize, c: usize| (r, c) != start && (r, c) != goal;
    let total = (0..side).flat_map(|r| (0..side).map(move |c| (r, c))).filter(|&(r, c)| eligible(r, c)).count();
    let count = count.min(total);
    let mut w = 0i64;
    let band = loop {
        let band: Vec<(usize, usize)> = (0..side)
            .flat_map(|r| (0..side).map(move |c| (r, c)))
            .filter(|&(r, c)| eligible(r, c) && (r as i64 + c as i64 - (n - 1)).abs() <= w)
            .collect();
        if band.len() >= count {
            break band;
        }
        w += 1;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x68617a61);
    let mut chosen: Vec<(usize, usize)> = band.choose_multiple(&mut rng, count).copied().collect();
    chosen.sort_unstable();
    chosen
}

/// The canonical 5×5, 25×25 and 40×40 instances.
pub fn canonical_specs() -> Vec<GridSpec> {
    CANONICAL_SIDES.iter().map(|&n| GridSpec::canonical(n, 0).expect("canonical side ≥ 2")).collect()
}

pub fn build_gridworld(spec: &GridSpec) -> Result<TabularCmdp, ModelError> {
    spec.validate()?;
    let n_states = spec.n_states();
    let det = CostDistribution::deterministic;
    let costs = spec.cell_costs();
    let start = spec.id(spec.start);
    let goal = spec.id(spec.goal);
    let mut hazard = vec![false; n_states];
    for &h in &spec.hazards {
        hazard[spec.id(h)] = true;
    }

    let mut b = CmdpBuilder::new(n_states, 4, 1)
        .alphas(vec![spec.alpha])
        .initial_state(start);
    for s in 0..n_states {
        let cell = spec.cell(s);
        if s == goal {
            for a in 0..4 {
                b.transition(s, a, start, 1.0, det(0.0), vec![det(0.0)])?;
            }
            continue;
        }
        let neighbors: Vec<(usize, usize)> =
            (0..4).filter_map(|a| spec.neighbor(cell, a).map(|c| (a, spec.id(c)))).collect();
        let constraint = if hazard[s] { spec.hazard_constraint_cost } else { costs[s].1 };
        for a in 0..4 {
            let target = spec.neighbor(cell, a).map(|c| spec.id(c));
            let cost = if target.is_none() { spec.out_of_grid_cost } else { costs[s].0 };
            for (next, p) in move_distribution(s, target, &neighbors) {
                b.transition(s, a, next, p, det(cost), vec![det(constraint)])?;
            }
        }
    }
    b.build()
}

/// Successor law of one move from `s` given the directed target (if on the
/// grid) and the on-grid neighbors `(action, id)` of `s`.
fn move_distribution(s: usize, target: Option<usize>, neighbors: &[(usize, usize)]) -> Vec<(usize, f64)> {
    let corner = neighbors.len() == 2;
    let interior = neighbors.len() == 4;
    match target {
        None => {
            let stay = if corner { 0.8 } else { 0.7 };
            let mut out = vec![(s, stay)];
            out.extend(neighbors.iter().map(|&(_, id)| (id, 0.1)));
            out
        }
        Some(t) => {
            let others = neighbors.iter().filter(|&&(_, id)| id != t).map(|&(_, id)| id);
            if corner {
                let mut out = vec![(t, 0.8)];
                out.extend(others.map(|id| (id, 0.2)));
                out
            } else if interior {
                let mut out = vec![(t, 0.7)];
                out.extend(others.map(|id| (id, 0.1)));
                out
            } else {
                let mut out = vec![(t, 0.7), (s, 0.1)];
                out.extend(others.map(|id| (id, 0.1)));
                out
            }
        }
    }
}

/// Text map of the grid: `S`/`G` mark start and goal, `!` a hazard, and each
/// cell shows its running and constraint cost as `q/h`.
pub fn describe(spec: &GridSpec) -> String {
    let costs = spec.cell_costs();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}x{} grid, start {:?}, goal {:?}, {} hazards, cost_seed {}, alpha {}",
        spec.side,
        spec.side,
        spec.start,
        spec.goal,
        spec.hazards.len(),
        spec.cost_seed,
        spec.alpha
    );
    for r in 0..spec.side {
        let row: Vec<String> = (0..spec.side)
            .map(|c| {
                let s = spec.id((r, c));
                if (r, c) == spec.goal {
                    return "  G  ".to_string();
                }
                let mark = if (r, c) == spec.start {
                    'S'
                } else if spec.hazards.contains(&(r, c)) {
                    '!'
                } else {
                    ' '
                };
                let h = if spec.hazards.contains(&(r, c)) { spec.hazard_constraint_cost } else { costs[s].1 };
                format!("{mark}{}/{}", costs[s].0, h)
            })
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_file::ModelFile;
    use crate::oracle;
    use crate::policy::{PolicyClass, SoftmaxPolicy};
    use rand::SeedableRng;
    use std::collections::VecDeque;
    use std::sync::Arc;

    fn five() -> (GridSpec, TabularCmdp) {
        let spec = GridSpec::canonical(5, 0).unwrap();
        let m = build_gridworld(&spec).unwrap();
        (spec, m)
    }

    fn probs(m: &TabularCmdp, s: usize, a: usize) -> Vec<f64> {
        (0..m.n_states()).map(|t| m.transition_prob(s, a, t)).collect()
    }

    #[test]
    fn corner_off_grid_action() {
        let (spec, m) = five();
        let p = probs(&m, 0, UP);
        assert_eq!(p[0], 0.8);
        assert_eq!(p[spec.id((0, 1))], 0.1);
        assert_eq!(p[spec.id((1, 0))], 0.1);
        assert!((m.expected_cost(0, UP) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn corner_on_grid_action() {
        let (spec, m) = five();
        let p = probs(&m, 0, RIGHT);
        assert_eq!(p[spec.id((0, 1))], 0.8);
        assert_eq!(p[spec.id((1, 0))], 0.2);
        assert_eq!(p[0], 0.0);
    }

    #[test]
    fn edge_cell_actions() {
        let (spec, m) = five();
        let s = spec.id((0, 2));
        let p = probs(&m, s, UP);
        assert!((p[s] - 0.7).abs() < 1e-15);
        for c in [(0, 1), (0, 3), (1, 2)] {
            assert_eq!(p[spec.id(c)], 0.1);
        }
        let p = probs(&m, s, DOWN);
        assert_eq!(p[spec.id((1, 2))], 0.7);
        assert_eq!(p[s], 0.1);
        assert_eq!(p[spec.id((0, 1))], 0.1);
        assert_eq!(p[spec.id((0, 3))], 0.1);
    }

    #[test]
    fn interior_right_action() {
        let (spec, m) = five();
        let s = spec.id((2, 2));
        let p = probs(&m, s, RIGHT);
        assert_eq!(p[spec.id((2, 3))], 0.7);
        for c in [(1, 2), (3, 2), (2, 1)] {
            assert_eq!(p[spec.id(c)], 0.1);
        }
        assert_eq!(p[s], 0.0);
    }

    #[test]
    fn interior_up_empirical_frequency() {
        let (spec, m) = five();
        let s = spec.id((2, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hits = (0..100_000).filter(|_| m.sample_step(s, UP, &mut rng).unwrap().next == spec.id((1, 2))).count();
        assert!((hits as f64 / 1e5 - 0.7).abs() <= 0.01);
    }

    #[test]
    fn goal_teleports_to_start_for_free() {
        for spec in canonical_specs() {
            let m = build_gridworld(&spec).unwrap();
            let g = spec.id(spec.goal);
            for a in 0..4 {
                assert_eq!(m.transition_prob(g, a, spec.id(spec.start)), 1.0);
                assert_eq!(m.expected_cost(g, a), 0.0);
                assert_eq!(m.expected_constraints(g, a), &[0.0]);
            }
        }
    }

    #[test]
    fn rows_sum_to_one_and_stay_on_grid() {
        for spec in canonical_specs() {
            let m = build_gridworld(&spec).unwrap();
            for s in 0..m.n_states() {
                for a in 0..4 {
                    let total: f64 = m.outcomes(s, a).iter().map(|o| o.prob).sum();
                    assert!((total - 1.0).abs() <= 1e-12);
                    assert!(m.outcomes(s, a).iter().all(|o| o.next < m.n_states()));
                }
            }
        }
    }

    #[test]
    fn costs_follow_the_cell_rules() {
        let (spec, m) = five();
        let hazards: Vec<usize> = spec.hazards.iter().map(|&h| spec.id(h)).collect();
        assert_eq!(hazards.len(), 3);
        for s in 0..25 {
            if s == spec.id(spec.goal) {
                continue;
            }
            for a in 0..4 {
                let q = m.expected_cost(s, a);
                let h = m.expected_constraints(s, a)[0];
                // expected costs carry the rounding of the row sum
                let is = |x: f64, v: f64| (x - v).abs() < 1e-12;
                if spec.neighbor(spec.cell(s), a).is_none() {
                    assert!(is(q, 10.0));
                } else {
                    assert!([2.0, 3.0, 4.0].iter().any(|&v| is(q, v)));
                }
                if hazards.contains(&s) {
                    assert!(is(h, 10.0));
                } else {
                    assert!([2.0, 3.0, 4.0].iter().any(|&v| is(h, v)));
                }
            }
        }
    }

    #[test]
    fn hazards_lie_on_the_anti_diagonal_band() {
        for spec in canonical_specs() {
            let n = spec.side as i64;
            let expected = (0.1 * (n * n) as f64).round() as usize;
            assert_eq!(spec.hazards.len(), expected);
            for &(r, c) in &spec.hazards {
                assert!((r as i64 + c as i64 - (n - 1)).abs() <= 2);
                assert!((r, c) != spec.start && (r, c) != spec.goal);
            }
        }
    }

    #[test]
    fn rebuilding_is_pure() {
        let spec = GridSpec::canonical(25, 7).unwrap();
        assert_eq!(build_gridworld(&spec).unwrap(), build_gridworld(&spec).unwrap());
        assert_eq!(GridSpec::canonical(25, 7).unwrap(), spec);
        assert_ne!(GridSpec::canonical(25, 8).unwrap().cell_costs(), spec.cell_costs());
    }

    #[test]
    fn five_by_five_round_trips_exactly() {
        let (_, m) = five();
        let text = ModelFile::from_model(&m, None).to_json().unwrap();
        let (back, _) = ModelFile::from_json(&text).unwrap().to_model().unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn canonical_instances_are_ergodic_under_uniform_policy() {
        for spec in canonical_specs() {
            let m = build_gridworld(&spec).unwrap();
            m.structural_ergodicity().unwrap();
            if spec.side <= 25 {
                let pol = SoftmaxPolicy::zeros(Arc::new(PolicyClass::tabular(&m)));
                let p = oracle::chain_matrix(&m, &pol);
                let mu = oracle::stationary_of_chain(&p).unwrap();
                assert!(oracle::stationary_residual(&p, &mu) <= 1e-10);
            }
        }
    }

    #[test]
    fn uniform_stationary_law_matches_power_iteration() {
        let (_, m) = five();
        let pol = SoftmaxPolicy::zeros(Arc::new(PolicyClass::tabular(&m)));
        let p = oracle::chain_matrix(&m, &pol);
        let lu = oracle::stationary_of_chain(&p).unwrap();
        let pw = oracle::power_iteration(&p).unwrap();
        assert!((&lu - &pw).amax() <= 1e-10);
    }

    #[test]
    fn every_state_reaches_goal() {
        for spec in canonical_specs() {
            let m = build_gridworld(&spec).unwrap();
            let goal = spec.id(spec.goal);
            let mut seen = vec![false; m.n_states()];
            seen[goal] = true;
            let mut queue = VecDeque::from([goal]);
            // backward search over transitions with positive probability
            let mut preds = vec![Vec::new(); m.n_states()];
            for s in 0..m.n_states() {
                for a in 0..4 {
                    for o in m.outcomes(s, a) {
                        if o.prob > 0.0 {
                            preds[o.next].push(s);
                        }
                    }
                }
            }
            while let Some(t) = queue.pop_front() {
                for &s in &preds[t] {
                    if !seen[s] {
                        seen[s] = true;
                        queue.push_back(s);
                    }
                }
            }
            assert!(seen.iter().all(|&x| x));
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(GridSpec::canonical(1, 0).is_err());
        let mut spec = GridSpec::canonical(5, 0).unwrap();
        spec.hazards.push(spec.goal);
        assert!(build_gridworld(&spec).is_err());
        let mut spec = GridSpec::canonical(5, 0).unwrap();
        spec.start = spec.goal;
        assert!(build_gridworld(&spec).is_err());
    }

    #[test]
    fn two_by_two_grid_has_only_corners() {
        let spec = GridSpec { hazards: vec![], ..GridSpec::canonical(2, 0).unwrap() };
        let m = build_gridworld(&spec).unwrap();
        assert_eq!(m.transition_prob(0, LEFT, 0), 0.8);
        assert_eq!(m.transition_prob(1, DOWN, 3), 0.8);
        assert_eq!(m.transition_prob(1, DOWN, 0), 0.2);
    }

    #[test]
    fn describe_marks_cells() {
        let spec = GridSpec::canonical(5, 0).unwrap();
        let text = describe(&spec);
        assert!(text.contains('S') && text.contains('G') && text.contains('!'));
        assert_eq!(text.lines().count(), 6);
    }
}
