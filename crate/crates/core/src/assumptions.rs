//! Numerical checks of the standing assumptions for a given `(θ, γ)`.
//!
//! Violations are reported, never fatal.

use nalgebra::{DMatrix, DVector};

use crate::features::StateFeatures;
use crate::mdp::TabularCmdp;
use crate::oracle::{self, ExactSolution};
use crate::policy::SoftmaxPolicy;

/// Number of powers of `P_θ` examined when fitting the ergodicity constants.
pub const TV_POWERS: usize = 200;
/// TV distances below this are treated as round-off and excluded from the fit.
pub const TV_FLOOR: f64 = 1e-13;
/// Start states examined for the TV decay on larger chains.
pub const MAX_TV_START_STATES: usize = 64;

/// Constants of `d_TV(Pᵗ(x, ·), μ) ≤ b·kᵗ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicityFit {
    pub b: f64,
    pub k: f64,
    /// Number of powers used in the fit.
    pub points: usize,
}

/// `max_x d_TV(Pᵗ(x, ·), μ)` for `t = 0..=max_power` over the given start
/// states. Stops early once every distance is below [`TV_FLOOR`].
pub fn tv_decay(p: &DMatrix<f64>, mu: &DVector<f64>, max_power: usize, starts: &[usize]) -> Vec<f64> {
    let n = p.nrows();
    let m = starts.len();
    let mut rows = DMatrix::zeros(n, m);
    for (j, &x) in starts.iter().enumerate() {
        rows[(x, j)] = 1.0;
    }
    let mut out = Vec::with_capacity(max_power + 1);
    for _ in 0..=max_power {
        let worst = (0..m)
            .map(|j| 0.5 * (0..n).map(|y| (rows[(y, j)] - mu[y]).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        out.push(worst);
        if worst < TV_FLOOR {
            break;
        }
        rows = p.tr_mul(&rows);
    }
    out
}

/// Start states for [`tv_decay`]: all of them, or an evenly strided subset.
pub fn tv_start_states(n: usize) -> Vec<usize> {
    if n <= MAX_TV_START_STATES {
        (0..n).collect()
    } else {
        (0..MAX_TV_START_STATES).map(|i| i * (n - 1) / (MAX_TV_START_STATES - 1)).collect()
    }
}

/// Least-squares fit of `ln d(t) = ln b + t ln k` over the powers above
/// [`TV_FLOOR`]; `b` is then raised so that `b·kᵗ ≥ d(t)` on every fitted point.
///
/// When only `t = 0` is above the floor (the chain mixes in one step), `k` is
/// the rate that reaches the floor at the first sub-floor power.
pub fn fit_ergodicity(decay: &[f64]) -> Option<ErgodicityFit> {
    let pts: Vec<(f64, f64)> = decay
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > TV_FLOOR)
        .map(|(t, &d)| (t as f64, d.ln()))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let k = if pts.len() == 1 {
        let t_below = decay.iter().position(|&d| d <= TV_FLOOR)? as f64;
        (TV_FLOOR / decay[0]).powf(1.0 / t_below)
    } else {
        let n = pts.len() as f64;
        let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|(t, y)| (t - mean_t) * (y - mean_y)).sum();
        let sxx: f64 = pts.iter().map(|(t, _)| (t - mean_t).powi(2)).sum();
        (sxy / sxx).exp()
    };
    let b = pts
        .iter()
        .map(|&(t, y)| (y - t * k.ln()).exp())
        .fold(0.0, f64::max);
    Some(ErgodicityFit { b, k, points: pts.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// `max_s ‖f_s‖`; bounded features require `≤ 1`.
    pub max_feature_norm: f64,
    /// `λ_e`: minus the largest eigenvalue of the symmetric part of `A`.
    pub lambda_e: Option<f64>,
    /// `A` is singular (the critic features span a constant).
    pub critic_singular: bool,
    /// Structural ergodicity failure, if any.
    pub ergodicity_violation: Option<String>,
    pub ergodicity_fit: Option<ErgodicityFit>,
    pub eps_app: Option<f64>,
    /// `D = 2·max‖x_{sa}‖ / T` bounds every compatible feature.
    pub score_bound: f64,
    /// Human-readable descriptions of every violated assumption.
    pub flags: Vec<String>,
}

impl AssumptionReport {
    pub fn bounded_features(&self) -> bool {
        self.max_feature_norm <= 1.0
    }

    pub fn negative_definite(&self) -> bool {
        !self.critic_singular && self.lambda_e.is_some_and(|l| l > 0.0)
    }

    pub fn ergodic(&self) -> bool {
        self.ergodicity_violation.is_none() && self.ergodicity_fit.is_some_and(|f| f.k < 1.0)
    }

    pub fn all_hold(&self) -> bool {
        self.flags.is_empty()
    }
}

pub fn assumption_report(
    model: &TabularCmdp,
    policy: &SoftmaxPolicy,
    gamma: &[f64],
    features: &StateFeatures,
) -> AssumptionReport {
    let mut flags = Vec::new();
    let max_feature_norm = features.max_norm();
    if max_feature_norm > 1.0 {
        flags.push(format!("bounded features: max ‖f_s‖ = {max_feature_norm} > 1"));
    }

    let mut report = AssumptionReport {
        max_feature_norm,
        lambda_e: None,
        critic_singular: false,
        ergodicity_violation: None,
        ergodicity_fit: None,
        eps_app: None,
        score_bound: policy.class().score_bound(),
        flags: Vec::new(),
    };

    if let Err(e) = model.structural_ergodicity() {
        flags.push(format!("ergodicity: {e}"));
        report.ergodicity_violation = Some(e);
        report.flags = flags;
        return report;
    }

    let p = oracle::chain_matrix(model, policy);
    match oracle::stationary_of_chain(&p) {
        Ok(mu) => {
            let decay = tv_decay(&p, &mu, TV_POWERS, &tv_start_states(model.n_states()));
            report.ergodicity_fit = fit_ergodicity(&decay);
            match report.ergodicity_fit {
                Some(fit) if fit.k >= 1.0 => flags.push(format!("ergodicity: fitted rate k = {} ≥ 1", fit.k)),
                None => flags.push("ergodicity: TV decay could not be fitted".into()),
                _ => {}
            }
        }
        Err(e) => {
            flags.push(format!("ergodicity: {e}"));
            report.ergodicity_violation = Some(e.to_string());
        }
    }

    match ExactSolution::compute(model, policy, gamma, features) {
        Ok(sol) => {
            report.lambda_e = Some(-sol.td.max_sym_eigenvalue);
            report.critic_singular = sol.td.degenerate;
            if sol.td.degenerate {
                flags.push(format!(
                    "negative definiteness: A is singular (max symmetric eigenvalue {:e})",
                    sol.td.max_sym_eigenvalue
                ));
            }
            report.eps_app = Some(sol.eps_app);
        }
        Err(e) => flags.push(format!("critic fixed point: {e}")),
    }
    report.flags = flags;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mdp::{CmdpBuilder, CostDistribution};
    use crate::policy::PolicyClass;
    use std::sync::Arc;

    #[test]
    fn second_eigenvalue_recovered_from_tv_decay() {
        // P = [[0.7, 0.3], [0.3, 0.7]] has λ₂ = 0.4.
        let p = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.3, 0.7]);
        let mu = oracle::stationary_of_chain(&p).unwrap();
        let fit = fit_ergodicity(&tv_decay(&p, &mu, TV_POWERS, &[0, 1])).unwrap();
        assert!((0.38..=0.42).contains(&fit.k), "{fit:?}");
        assert!(fit.b >= 0.5 - 1e-12);
    }

    #[test]
    fn asymmetric_chain_rate() {
        // λ₂ = 1 − 0.1 − 0.5 = 0.4
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.5]);
        let mu = oracle::stationary_of_chain(&p).unwrap();
        let decay = tv_decay(&p, &mu, TV_POWERS, &[0, 1]);
        let fit = fit_ergodicity(&decay).unwrap();
        assert!((0.38..=0.42).contains(&fit.k), "{fit:?}");
        for (t, d) in decay.iter().enumerate() {
            assert!(fit.b * fit.k.powi(t as i32) >= d * (1.0 - 1e-9));
        }
    }

    #[test]
    fn one_step_mixing_chain() {
        let p = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.3, 0.7]);
        let mu = oracle::stationary_of_chain(&p).unwrap();
        let fit = fit_ergodicity(&tv_decay(&p, &mu, TV_POWERS, &[0, 1])).unwrap();
        assert!(fit.k > 0.0 && fit.k < 1e-6);
    }

    #[test]
    fn fixtures_satisfy_assumptions() {
        for fx in fixtures::all() {
            let r = assumption_report(&fx.model, &fx.random_policy(0), &[0.5], &fx.state_features);
            assert!(r.all_hold(), "{}: {:?}", fx.name, r.flags);
            assert!(r.negative_definite() && r.ergodic() && r.bounded_features());
        }
    }

    #[test]
    fn oversized_feature_flagged() {
        let fx = fixtures::two_state();
        let f = StateFeatures::from_dense_rows(vec![vec![1.2], vec![0.0]]).unwrap();
        let r = assumption_report(&fx.model, &fx.random_policy(0), &[0.0], &f);
        assert!(!r.bounded_features());
        assert!(r.flags.iter().any(|f| f.starts_with("bounded features")));
    }

    #[test]
    fn one_hot_features_have_zero_approximation_error() {
        let fx = fixtures::five_state();
        let f = StateFeatures::one_hot(5);
        let r = assumption_report(&fx.model, &fx.random_policy(1), &[0.3], &f);
        assert!(r.eps_app.unwrap() <= 1e-9);
        // the constant direction makes A singular
        assert!(!r.negative_definite());
    }

    #[test]
    fn disconnected_chain_reported() {
        let d = CostDistribution::deterministic;
        let mut b = CmdpBuilder::new(4, 1, 1).alphas(vec![1.0]);
        for (s, t) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
            b.transition(s, 0, t, 0.5, d(0.0), vec![d(0.0)]).unwrap();
            b.transition(s, 0, s, 0.5, d(0.0), vec![d(0.0)]).unwrap();
        }
        let m = b.build().unwrap();
        let pol = SoftmaxPolicy::zeros(Arc::new(PolicyClass::tabular(&m)));
        let r = assumption_report(&m, &pol, &[0.0], &StateFeatures::one_hot_reference(4, 0));
        assert!(!r.ergodic());
        assert!(r.flags.iter().any(|f| f.starts_with("ergodicity")));
    }
}
