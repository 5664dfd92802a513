//! Exact quantities of a known model under a fixed policy and multiplier.
//!
//! Everything here is dense linear algebra over the state space and is meant
//! for verification: stationary distributions, the Lagrangian and its
//! components, differential values, the exact policy gradient and the
//! fixed point of the linear TD(0) critic. Sizes up to a few thousand states
//! are practical.

use nalgebra::{DMatrix, DVector};

use crate::error::OracleError;
use crate::features::StateFeatures;
use crate::mdp::TabularCmdp;
use crate::policy::SoftmaxPolicy;

/// Tolerance on `μᵀP = μᵀ` accepted from the direct solve.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
/// Residual demanded of the TD fixed point.
pub const TD_RESIDUAL_TOL: f64 = 1e-9;

const POWER_TOL: f64 = 1e-15;
const POWER_MAX_ITER: usize = 1_000_000;

/// Policy-averaged transition matrix `P_θ(s, s') = Σ_a π(a|s) p(s, a, s')`.
pub fn chain_matrix(model: &TabularCmdp, policy: &SoftmaxPolicy) -> DMatrix<f64> {
    let n = model.n_states();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        let probs = policy.action_probs(s);
        for (local, &pa) in probs.iter().enumerate() {
            for o in model.outcomes(s, local) {
                p[(s, o.next)] += pa * o.prob;
            }
        }
    }
    p
}

/// Stationary distribution of the chain induced by `policy`.
///
/// Rejects structurally non-ergodic models up front, then solves
/// `(Pᵀ − I)μ = 0, 1ᵀμ = 1` directly, falling back to power iteration when
/// the direct solution is unusable.
pub fn stationary_distribution(model: &TabularCmdp, policy: &SoftmaxPolicy) -> Result<DVector<f64>, OracleError> {
    model.structural_ergodicity().map_err(OracleError::Ergodicity)?;
    stationary_of_chain(&chain_matrix(model, policy))
}

pub fn stationary_of_chain(p: &DMatrix<f64>) -> Result<DVector<f64>, OracleError> {
    let n = p.nrows();
    let mut m = p.transpose();
    for i in 0..n {
        m[(i, i)] -= 1.0;
    }
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    if let Some(mu) = m.lu().solve(&rhs) {
        if mu.iter().all(|&x| x.is_finite() && x >= -1e-12)
            && stationary_residual(p, &mu) <= STATIONARY_RESIDUAL_TOL
        {
            return Ok(mu);
        }
    }
    power_iteration(p)
}

/// `‖μᵀP − μᵀ‖_∞`.
pub fn stationary_residual(p: &DMatrix<f64>, mu: &DVector<f64>) -> f64 {
    (p.tr_mul(mu) - mu).amax()
}

/// Plain power iteration `μ ← μP` from the uniform distribution.
pub fn power_iteration(p: &DMatrix<f64>) -> Result<DVector<f64>, OracleError> {
    let n = p.nrows();
    let mut mu = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..POWER_MAX_ITER {
        let mut next = p.tr_mul(&mu);
        let total = next.sum();
        next /= total;
        let change = (&next - &mu).lp_norm(1);
        mu = next;
        if change < POWER_TOL {
            return Ok(mu);
        }
    }
    Err(OracleError::Ergodicity(format!(
        "power iteration did not converge in {POWER_MAX_ITER} iterations"
    )))
}

fn check_gamma(model: &TabularCmdp, gamma: &[f64]) -> Result<(), OracleError> {
    if gamma.len() != model.n_constraints() {
        return Err(OracleError::Dimension(format!(
            "{} multipliers for {} constraints",
            gamma.len(),
            model.n_constraints()
        )));
    }
    Ok(())
}

/// Relaxed single-stage cost `c_γ(s, a) = d(s, a) + Σ_k γ_k (h_k(s, a) − α_k)`.
pub fn relaxed_cost(model: &TabularCmdp, gamma: &[f64], s: usize, local: usize) -> f64 {
    let h = model.expected_constraints(s, local);
    model.expected_cost(s, local)
        + gamma
            .iter()
            .zip(h)
            .zip(model.alphas())
            .map(|((g, h), a)| g * (h - a))
            .sum::<f64>()
}

/// `L(θ, γ) = J(θ) + Σ_k γ_k (G_k(θ) − α_k)` with its components.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianValue {
    pub lagrangian: f64,
    pub avg_cost: f64,
    pub avg_constraints: Vec<f64>,
}

fn lagrangian_from(
    model: &TabularCmdp,
    policy: &SoftmaxPolicy,
    gamma: &[f64],
    mu: &DVector<f64>,
) -> LagrangianValue {
    let n_c = model.n_constraints();
    let mut avg_cost = 0.0;
    let mut avg_constraints = vec![0.0; n_c];
    for s in 0..model.n_states() {
        let probs = policy.action_probs(s);
        for (local, &pa) in probs.iter().enumerate() {
            let w = mu[s] * pa;
            avg_cost += w * model.expected_cost(s, local);
            for (acc, h) in avg_constraints.iter_mut().zip(model.expected_constraints(s, local)) {
                *acc += w * h;
            }
        }
    }
    let lagrangian = avg_cost
        + gamma
            .iter()
            .zip(&avg_constraints)
            .zip(model.alphas())
            .map(|((g, gk), a)| g * (gk - a))
            .sum::<f64>();
    LagrangianValue { lagrangian, avg_cost, avg_constraints }
}

pub fn exact_lagrangian(
    model: &TabularCmdp,
    policy: &SoftmaxPolicy,
    gamma: &[f64],
) -> Result<LagrangianValue, OracleError> {
    check_gamma(model, gamma)?;
    let mu = stationary_distribution(model, policy)?;
    Ok(lagrangian_from(model, policy, gamma, &mu))
}

/// Differential values of the relaxed problem, normalized so `μᵀV = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialValues {
    pub mu: DVector<f64>,
    pub lagrangian: LagrangianValue,
    /// `V(s)`
    pub state_values: DVector<f64>,
    /// `M(s, a)` by local action
    pub action_values: Vec<Vec<f64>>,
}

impl DifferentialValues {
    /// `A(s, a) = M(s, a) − V(s)`
    pub fn advantage(&self, s: usize, local: usize) -> f64 {
        self.action_values[s][local] - self.state_values[s]
    }
}

fn differential_from(
    model: &TabularCmdp,
    policy: &SoftmaxPolicy,
    gamma: &[f64],
    p: &DMatrix<f64>,
    mu: DVector<f64>,
) -> Result<DifferentialValues, OracleError> {
    let n = model.n_states();
    let lag = lagrangian_from(model, policy, gamma, &mu);
    let l = lag.lagrangian;

    let mut rhs = DVector::zeros(n);
    for s in 0..n {
        let probs = policy.action_probs(s);
        rhs[s] = probs
            .iter()
            .enumerate()
            .map(|(local, pa)| pa * relaxed_cost(model, gamma, s, local))
            .sum::<f64>()
            - l;
    }
    // (I − P + 1μᵀ) V = c̄ − L·1 forces μᵀV = 0.
    let mut z = -p.clone();
    for i in 0..n {
        z[(i, i)] += 1.0;
        for j in 0..n {
            z[(i, j)] += mu[j];
        }
    }
    let v = z
        .lu()
        .solve(&rhs)
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .ok_or_else(|| OracleError::Ergodicity("singular Poisson system".into()))?;

    let action_values = (0..n)
        .map(|s| {
            (0..model.feasible_actions(s).len())
                .map(|local| {
                    let future: f64 = model.outcomes(s, local).iter().map(|o| o.prob * v[o.next]).sum();
                    relaxed_cost(model, gamma, s, local) - l + future
                })
                .collect()
        })
        .collect();
    Ok(DifferentialValues { mu, lagrangian: lag, state_values: v, action_values })
}

pub fn differential_values(
    model: &TabularCmdp,
    policy: &SoftmaxPolicy,
    gamma: &[f64],
) -> Result<DifferentialValues, OracleError> {
    check_gamma(model, gamma)?;
    model.structural_ergodicity().map_err(OracleError::Ergodicity)?;
    let p = chain_matrix(model, policy);
    let mu = stationary_of_chain(&p)?;
    differential_from(model, policy, gamma, &p, mu)
}

fn gradient_from(model: &TabularCmdp, policy: &SoftmaxPolicy, dv: &DifferentialValues) -> DVector<f64> {
    let mut grad = vec![0.0; policy.dim()];
    for s in 0..model.n_states() {
        let probs = policy.action_probs(s);
        for (local, &pa) in probs.iter().enumerate() {
            let psi = policy.class().score_with_probs(s, local, &probs);
            psi.axpy(dv.mu[s] * pa * dv.advantage(s, local), &mut grad);
        }
    }
    DVector::from_vec(grad)
}

/// `∇_θ L(θ, γ) = Σ_s μ(s) Σ_a π(a|s) Ψ_sa A(s, a)`.
pub fn exact_policy_gradient(
    model: &TabularCmdp,
    policy: &SoftmaxPolicy,
    gamma: &[f64],
) -> Result<DVector<f64>, OracleError> {
    let dv = differential_values(model, policy, gamma)?;
    Ok(gradient_from(model, policy, &dv))
}

/// Fixed point `v*` of the linear TD(0) critic, `A v* + b = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TdFixedPoint {
    pub v_star: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Largest eigenvalue of `(A + Aᵀ)/2`; `−λ_e` when negative.
    pub max_sym_eigenvalue: f64,
    /// `A` is singular (the features span a constant); `v*` is then the
    /// solution with `μᵀ F v* = 0`.
    pub degenerate: bool,
}

impl TdFixedPoint {
    pub fn residual(&self) -> f64 {
        (&self.a * &self.v_star + &self.b).amax()
    }
}

fn td_from(
    features: &StateFeatures,
    p: &DMatrix<f64>,
    mu: &DVector<f64>,
    centered_cost: &DVector<f64>,
) -> Result<TdFixedPoint, OracleError> {
    let n = p.nrows();
    if features.n_states() != n {
        return Err(OracleError::Dimension(format!(
            "{} feature rows for {n} states",
            features.n_states()
        )));
    }
    let f = features.to_matrix();
    let d_mu = DMatrix::from_diagonal(mu);
    let mut p_minus_i = p.clone();
    for i in 0..n {
        p_minus_i[(i, i)] -= 1.0;
    }
    let a = f.transpose() * &d_mu * p_minus_i * &f;
    let b = f.transpose() * (&d_mu * centered_cost);

    let sym = (&a + a.transpose()) * 0.5;
    let max_eig = if sym.nrows() == 0 {
        f64::NEG_INFINITY
    } else {
        sym.symmetric_eigenvalues().max()
    };
    let scale = a.amax().max(1.0);
    let tol = 1e-10 * scale;
    if max_eig > tol {
        return Err(OracleError::NotNegativeDefinite { max_eig });
    }

    let residual_ok = |v: &DVector<f64>| (&a * v + &b).amax() <= TD_RESIDUAL_TOL;
    if max_eig < -tol {
        if let Some(v) = a.clone().lu().solve(&(-&b)) {
            if residual_ok(&v) {
                return Ok(TdFixedPoint { v_star: v, a, b, max_sym_eigenvalue: max_eig, degenerate: false });
            }
        }
    }
    // Semi-definite: pin the free constant with μᵀFv = 0.
    let d1 = a.ncols();
    let mut stacked = DMatrix::zeros(d1 + 1, d1);
    stacked.rows_mut(0, d1).copy_from(&a);
    let mu_f = f.tr_mul(mu);
    for j in 0..d1 {
        stacked[(d1, j)] = mu_f[j];
    }
    let mut rhs = DVector::zeros(d1 + 1);
    rhs.rows_mut(0, d1).copy_from(&(-&b));
    let svd = stacked.svd(true, true);
    let v = svd
        .solve(&rhs, 1e-13 * scale)
        .map_err(|e| OracleError::Dimension(e.to_string()))?;
    let residual = (&a * &v + &b).amax();
    if residual > TD_RESIDUAL_TOL {
        return Err(OracleError::Inconsistent { residual });
    }
    Ok(TdFixedPoint { v_star: v, a, b, max_sym_eigenvalue: max_eig, degenerate: true })
}

fn centered_policy_cost(
    model: &TabularCmdp,
    policy: &SoftmaxPolicy,
    gamma: &[f64],
    lagrangian: f64,
) -> DVector<f64> {
    DVector::from_iterator(
        model.n_states(),
        (0..model.n_states()).map(|s| {
            policy
                .action_probs(s)
                .iter()
                .enumerate()
                .map(|(local, pa)| pa * relaxed_cost(model, gamma, s, local))
                .sum::<f64>()
                - lagrangian
        }),
    )
}

/// `A = E[f_s (f_{s'} − f_s)ᵀ]`, `b = E[(C(s, a, γ) − L) f_s]` under the
/// stationary law, and `v* = −A⁻¹b`.
pub fn td_fixed_point(
    model: &TabularCmdp,
    policy: &SoftmaxPolicy,
    gamma: &[f64],
    features: &StateFeatures,
) -> Result<TdFixedPoint, OracleError> {
    check_gamma(model, gamma)?;
    model.structural_ergodicity().map_err(OracleError::Ergodicity)?;
    let p = chain_matrix(model, policy);
    let mu = stationary_of_chain(&p)?;
    let lag = lagrangian_from(model, policy, gamma, &mu);
    td_from(features, &p, &mu, &centered_policy_cost(model, policy, gamma, lag.lagrangian))
}

/// `ε_app`: μ-weighted RMS gap between `f_sᵀv*` and `V(s)` once the (free)
/// additive constant is removed.
pub fn approximation_error(
    features: &StateFeatures,
    v_star: &DVector<f64>,
    mu: &DVector<f64>,
    state_values: &DVector<f64>,
) -> f64 {
    let approx = features.to_matrix() * v_star;
    let diff = approx - state_values;
    let mean = mu.dot(&diff);
    mu.iter()
        .zip(diff.iter())
        .map(|(m, d)| m * (d - mean).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Everything the oracles know about `(θ, γ)` at once.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub mu: DVector<f64>,
    pub lagrangian: f64,
    pub avg_cost: f64,
    pub avg_constraints: Vec<f64>,
    pub diff_value: DVector<f64>,
    pub diff_action_value: Vec<Vec<f64>>,
    pub grad: DVector<f64>,
    pub td: TdFixedPoint,
    pub eps_app: f64,
}

impl ExactSolution {
    pub fn compute(
        model: &TabularCmdp,
        policy: &SoftmaxPolicy,
        gamma: &[f64],
        features: &StateFeatures,
    ) -> Result<Self, OracleError> {
        check_gamma(model, gamma)?;
        model.structural_ergodicity().map_err(OracleError::Ergodicity)?;
        let p = chain_matrix(model, policy);
        let mu = stationary_of_chain(&p)?;
        let dv = differential_from(model, policy, gamma, &p, mu)?;
        let grad = gradient_from(model, policy, &dv);
        let centered = centered_policy_cost(model, policy, gamma, dv.lagrangian.lagrangian);
        let td = td_from(features, &p, &dv.mu, &centered)?;
        let eps_app = approximation_error(features, &td.v_star, &dv.mu, &dv.state_values);
        Ok(ExactSolution {
            lagrangian: dv.lagrangian.lagrangian,
            avg_cost: dv.lagrangian.avg_cost,
            avg_constraints: dv.lagrangian.avg_constraints,
            mu: dv.mu,
            diff_value: dv.state_values,
            diff_action_value: dv.action_values,
            grad,
            td,
            eps_app,
        })
    }

    pub fn advantage(&self, s: usize, local: usize) -> f64 {
        self.diff_action_value[s][local] - self.diff_value[s]
    }
}

/// Optimal average cost of the weighted cost `w₀·d(s, a) + Σ_k w_k·h_k(s, a)`
/// over all stationary policies, by relative value iteration on the lazy
/// chain `(P + I)/2` (same stationary laws, hence the same averages).
///
/// Returns the optimal gain and a greedy local action per state.
#[derive(Debug, Clone, PartialEq)]
pub struct MinAverageCost {
    pub gain: f64,
    pub actions: Vec<usize>,
    pub iterations: usize,
}

pub fn min_average_cost(model: &TabularCmdp, weights: &[f64]) -> Result<MinAverageCost, OracleError> {
    if weights.len() != model.n_constraints() + 1 {
        return Err(OracleError::Dimension(format!(
            "expected {} weights, got {}",
            model.n_constraints() + 1,
            weights.len()
        )));
    }
    let n = model.n_states();
    let cost = |s: usize, l: usize| {
        weights[0] * model.expected_cost(s, l)
            + weights[1..].iter().zip(model.expected_constraints(s, l)).map(|(w, h)| w * h).sum::<f64>()
    };
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut actions = vec![0; n];
    for it in 1..=POWER_MAX_ITER {
        for s in 0..n {
            let mut best = f64::INFINITY;
            for l in 0..model.feasible_actions(s).len() {
                let ev: f64 = model.outcomes(s, l).iter().map(|o| o.prob * h[o.next]).sum();
                let q = cost(s, l) + 0.5 * (ev + h[s]);
                if q < best {
                    best = q;
                    actions[s] = l;
                }
            }
            next[s] = best;
        }
        let diff: Vec<f64> = next.iter().zip(&h).map(|(a, b)| a - b).collect();
        let lo = diff.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let anchor = next[0];
        for (hs, ns) in h.iter_mut().zip(&next) {
            *hs = ns - anchor;
        }
        if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
            return Ok(MinAverageCost { gain: 0.5 * (lo + hi), actions, iterations: it });
        }
    }
    Err(OracleError::Ergodicity("relative value iteration did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mdp::{CmdpBuilder, CostDistribution};
    use crate::policy::PolicyClass;
    use std::sync::Arc;

    fn det(x: f64) -> CostDistribution {
        CostDistribution::deterministic(x)
    }

    /// Single-action model whose induced chain is exactly `p`.
    fn chain_model(p: &[&[f64]], cost: &[f64]) -> TabularCmdp {
        let n = p.len();
        let mut b = CmdpBuilder::new(n, 1, 1).alphas(vec![1.0]);
        for s in 0..n {
            for (t, &pr) in p[s].iter().enumerate() {
                if pr > 0.0 {
                    b.transition(s, 0, t, pr, det(cost[s]), vec![det(0.0)]).unwrap();
                }
            }
        }
        b.build().unwrap()
    }

    fn uniform(model: &TabularCmdp) -> SoftmaxPolicy {
        SoftmaxPolicy::zeros(Arc::new(PolicyClass::tabular(model)))
    }

    #[test]
    fn two_state_stationary() {
        let m = chain_model(&[&[0.9, 0.1], &[0.5, 0.5]], &[0.0, 0.0]);
        let mu = stationary_distribution(&m, &uniform(&m)).unwrap();
        assert!((mu[0] - 5.0 / 6.0).abs() < 1e-14);
        assert!((mu[1] - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn doubly_stochastic_is_uniform() {
        let m = chain_model(
            &[
                &[0.1, 0.2, 0.3, 0.4],
                &[0.4, 0.1, 0.2, 0.3],
                &[0.3, 0.4, 0.1, 0.2],
                &[0.2, 0.3, 0.4, 0.1],
            ],
            &[0.0; 4],
        );
        let mu = stationary_distribution(&m, &uniform(&m)).unwrap();
        for &x in mu.iter() {
            assert!((x - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn direct_and_power_solvers_agree_on_fixtures() {
        for fx in fixtures::all() {
            let pol = uniform(&fx.model);
            let p = chain_matrix(&fx.model, &pol);
            let direct = stationary_of_chain(&p).unwrap();
            let power = power_iteration(&p).unwrap();
            assert!((&direct - &power).amax() < 1e-9, "{}", fx.name);
            assert!(stationary_residual(&p, &direct) <= 1e-10);
            assert!((direct.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_costs_leave_threshold_term() {
        let m = chain_model(&[&[0.5, 0.5], &[0.2, 0.8]], &[0.0, 0.0]);
        let l = exact_lagrangian(&m, &uniform(&m), &[2.5]).unwrap();
        assert!((l.lagrangian + 2.5 * 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_multiplier_gives_average_cost() {
        let fx = fixtures::three_state();
        let pol = uniform(&fx.model);
        let l = exact_lagrangian(&fx.model, &pol, &[0.0]).unwrap();
        assert_eq!(l.lagrangian, l.avg_cost);
    }

    #[test]
    fn two_state_lagrangian_by_hand() {
        // P = [[0.9, 0.1], [0.5, 0.5]], μ = (5/6, 1/6); d = (1, 3); h = (0, 2); α = 1
        let mut b = CmdpBuilder::new(2, 1, 1).alphas(vec![1.0]);
        b.transition(0, 0, 0, 0.9, det(1.0), vec![det(0.0)]).unwrap();
        b.transition(0, 0, 1, 0.1, det(1.0), vec![det(0.0)]).unwrap();
        b.transition(1, 0, 0, 0.5, det(3.0), vec![det(2.0)]).unwrap();
        b.transition(1, 0, 1, 0.5, det(3.0), vec![det(2.0)]).unwrap();
        let m = b.build().unwrap();
        let l = exact_lagrangian(&m, &uniform(&m), &[0.5]).unwrap();
        let j = 5.0 / 6.0 * 1.0 + 1.0 / 6.0 * 3.0;
        let g = 1.0 / 6.0 * 2.0;
        assert!((l.avg_cost - j).abs() < 1e-14);
        assert!((l.avg_constraints[0] - g).abs() < 1e-14);
        assert!((l.lagrangian - (j + 0.5 * (g - 1.0))).abs() < 1e-14);
    }

    #[test]
    fn iid_chain_has_zero_differential_value() {
        let m = chain_model(&[&[0.3, 0.7], &[0.3, 0.7]], &[2.0, 2.0]);
        let dv = differential_values(&m, &uniform(&m), &[0.0]).unwrap();
        assert!(dv.state_values.amax() < 1e-14);
    }

    /// Relative value iteration on the induced chain, normalized to μᵀV = 0.
    fn relative_value_iteration(p: &DMatrix<f64>, c: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        let n = p.nrows();
        let mut h = DVector::zeros(n);
        for _ in 0..100_000 {
            let t = c + p * &h;
            let next = &t - DVector::from_element(n, t[0]);
            let done = (&next - &h).amax() < 1e-15;
            h = next;
            if done {
                break;
            }
        }
        let shift = mu.dot(&h);
        h.map(|x| x - shift)
    }

    #[test]
    fn poisson_solution_matches_relative_value_iteration() {
        let fx = fixtures::two_state();
        let pol = uniform(&fx.model);
        let gamma = [0.7];
        let dv = differential_values(&fx.model, &pol, &gamma).unwrap();
        let p = chain_matrix(&fx.model, &pol);
        let c = DVector::from_iterator(
            2,
            (0..2).map(|s| {
                pol.action_probs(s)
                    .iter()
                    .enumerate()
                    .map(|(a, pa)| pa * relaxed_cost(&fx.model, &gamma, s, a))
                    .sum::<f64>()
            }),
        );
        let rvi = relative_value_iteration(&p, &c, &dv.mu);
        assert!((&rvi - &dv.state_values).amax() < 1e-8);
    }

    #[test]
    fn advantage_has_zero_stationary_mean() {
        for fx in fixtures::all() {
            let pol = fx.random_policy(3);
            let dv = differential_values(&fx.model, &pol, &[1.3]).unwrap();
            let mut total = 0.0;
            for s in 0..fx.model.n_states() {
                for (a, pa) in pol.action_probs(s).iter().enumerate() {
                    total += dv.mu[s] * pa * dv.advantage(s, a);
                }
            }
            assert!(total.abs() < 1e-10, "{}: {total}", fx.name);
        }
    }

    #[test]
    fn constant_costs_have_zero_gradient() {
        let fx = fixtures::three_state();
        let mut b = CmdpBuilder::new(3, 2, 1).alphas(vec![1.0]);
        for s in 0..3 {
            for (local, &a) in fx.model.feasible_actions(s).iter().enumerate() {
                for o in fx.model.outcomes(s, local) {
                    b.transition(s, a, o.next, o.prob, det(2.0), vec![det(1.0)]).unwrap();
                }
            }
        }
        let m = b.build().unwrap();
        let pol = SoftmaxPolicy::new(Arc::new(PolicyClass::tabular(&m)), vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.2]);
        let g = exact_policy_gradient(&m, &pol, &[0.0]).unwrap();
        assert!(g.amax() < 1e-13);
    }

    fn fd_gradient(fx: &fixtures::Fixture, pol: &SoftmaxPolicy, gamma: &[f64], h: f64) -> DVector<f64> {
        let d = pol.dim();
        DVector::from_iterator(
            d,
            (0..d).map(|i| {
                let mut tp = pol.theta().to_vec();
                let mut tm = tp.clone();
                tp[i] += h;
                tm[i] -= h;
                let lp = exact_lagrangian(&fx.model, &pol.with_theta(tp), gamma).unwrap().lagrangian;
                let lm = exact_lagrangian(&fx.model, &pol.with_theta(tm), gamma).unwrap().lagrangian;
                (lp - lm) / (2.0 * h)
            }),
        )
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for fx in fixtures::all() {
            for seed in 0..3 {
                let pol = fx.random_policy(seed);
                let gamma = [0.4 * seed as f64];
                let g = exact_policy_gradient(&fx.model, &pol, &gamma).unwrap();
                let fd = fd_gradient(&fx, &pol, &gamma, 1e-5);
                let rel = (&g - &fd).norm() / g.norm();
                assert!(rel <= 1e-5, "{} seed {seed}: rel {rel}", fx.name);
            }
        }
    }

    #[test]
    fn multiplier_derivative_is_constraint_slack() {
        let fx = fixtures::five_state();
        let pol = fx.random_policy(1);
        let h = 1e-5;
        let lp = exact_lagrangian(&fx.model, &pol, &[1.0 + h]).unwrap();
        let lm = exact_lagrangian(&fx.model, &pol, &[1.0 - h]).unwrap();
        let fd = (lp.lagrangian - lm.lagrangian) / (2.0 * h);
        let exact = lp.avg_constraints[0] - fx.model.alphas()[0];
        assert!((fd - exact).abs() < 1e-8);
    }

    #[test]
    fn one_hot_fixed_point_reproduces_centered_values() {
        for fx in fixtures::all() {
            let pol = fx.random_policy(7);
            let f = StateFeatures::one_hot(fx.model.n_states());
            let sol = ExactSolution::compute(&fx.model, &pol, &[0.8], &f).unwrap();
            assert!(sol.td.degenerate);
            assert!(sol.td.residual() <= 1e-9);
            assert!((&sol.td.v_star - &sol.diff_value).amax() <= 1e-8, "{}", fx.name);
            assert!(sol.eps_app <= 1e-9);
        }
    }

    #[test]
    fn fixture_features_give_negative_definite_a() {
        for fx in fixtures::all() {
            let pol = fx.random_policy(2);
            let td = td_fixed_point(&fx.model, &pol, &[0.5], &fx.state_features).unwrap();
            assert!(!td.degenerate);
            assert!(td.max_sym_eigenvalue < 0.0);
            assert!(td.residual() <= 1e-9);
        }
    }

    #[test]
    fn zero_relaxed_cost_gives_zero_fixed_point() {
        let m = chain_model(&[&[0.5, 0.5], &[0.2, 0.8]], &[0.0, 0.0]);
        let f = StateFeatures::one_hot_reference(2, 1);
        let td = td_fixed_point(&m, &uniform(&m), &[0.0], &f).unwrap();
        assert!(td.b.amax() == 0.0);
        assert!(td.v_star.amax() == 0.0);
    }

    #[test]
    fn symmetric_part_is_never_positive_under_stationary_law() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for fx in fixtures::all() {
            let pol = fx.random_policy(4);
            for _ in 0..20 {
                let rows = (0..fx.model.n_states())
                    .map(|_| (0..2).map(|_| rng.random_range(-0.7..0.7)).collect())
                    .collect();
                let f = StateFeatures::from_dense_rows(rows).unwrap();
                let td = td_fixed_point(&fx.model, &pol, &[0.2], &f).unwrap();
                assert!(td.max_sym_eigenvalue <= 1e-12);
            }
        }
    }

    #[test]
    fn constant_features_are_degenerate_with_zero_solution() {
        let fx = fixtures::two_state();
        let f = StateFeatures::from_dense_rows(vec![vec![1.0], vec![1.0]]).unwrap();
        let td = td_fixed_point(&fx.model, &uniform(&fx.model), &[0.3], &f).unwrap();
        assert!(td.degenerate);
        assert!(td.a.amax() < 1e-15 && td.b.amax() < 1e-14);
        assert!(td.v_star.amax() < 1e-12);
    }

    #[test]
    fn reducible_chain_is_an_ergodicity_error() {
        let m = chain_model(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0]);
        assert!(matches!(
            stationary_distribution(&m, &uniform(&m)),
            Err(OracleError::Ergodicity(_))
        ));
    }

    #[test]
    fn min_average_cost_matches_enumeration() {
        let fx = fixtures::five_state();
        let m = &fx.model;
        let sizes: Vec<usize> = (0..5).map(|s| m.feasible_actions(s).len()).collect();
        for weights in [[1.0, 0.0], [0.0, 1.0], [1.0, 2.5]] {
            let mut best = f64::INFINITY;
            let total: usize = sizes.iter().product();
            for code in 0..total {
                let mut c = code;
                let choice: Vec<usize> = sizes
                    .iter()
                    .map(|&k| {
                        let a = c % k;
                        c /= k;
                        a
                    })
                    .collect();
                let mut p = DMatrix::zeros(5, 5);
                for s in 0..5 {
                    for o in m.outcomes(s, choice[s]) {
                        p[(s, o.next)] += o.prob;
                    }
                }
                if let Ok(mu) = stationary_of_chain(&p) {
                    if stationary_residual(&p, &mu) > 1e-9 {
                        continue;
                    }
                    let g: f64 = (0..5)
                        .map(|s| {
                            mu[s] * (weights[0] * m.expected_cost(s, choice[s])
                                + weights[1] * m.expected_constraints(s, choice[s])[0])
                        })
                        .sum();
                    best = best.min(g);
                }
            }
            let rvi = min_average_cost(m, &weights).unwrap();
            assert!((rvi.gain - best).abs() <= 1e-9, "{weights:?}: {} vs {best}", rvi.gain);
        }
    }
}
