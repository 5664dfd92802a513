//! Oracle cross-checks and assumption findings for one model.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::MAX_ORACLE_STATES;
use super::HarnessError;
use crate::assumptions::assumption_report;
use crate::features::StateFeatures;
use crate::mdp::TabularCmdp;
use crate::oracle::{self, ExactSolution, TD_RESIDUAL_TOL};
use crate::policy::{PolicyClass, SoftmaxPolicy};

/// Stationary laws from LU and power iteration must agree to this.
pub const STATIONARY_AGREEMENT_TOL: f64 = 1e-9;
/// Relative error allowed between the exact gradient and central differences.
pub const GRADIENT_REL_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-5;
/// Above this many policy parameters the gradient is checked along random
/// directions instead of coordinate by coordinate.
const FULL_FD_MAX_DIM: usize = 128;
const FD_DIRECTIONS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckResult { name: name.into(), passed, detail: detail.into() });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {:<36} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// Runs every oracle cross-check on the uniform policy and on a random
/// tabular policy, with every multiplier at 0.5.
pub fn verify_suite(model: &TabularCmdp, features: &StateFeatures) -> Result<VerifyReport, HarnessError> {
    let n = model.n_states();
    if n > MAX_ORACLE_STATES {
        return Err(HarnessError::Config(format!("verify needs at most {MAX_ORACLE_STATES} states, model has {n}")));
    }
    if features.n_states() != n {
        return Err(HarnessError::Config(format!("features cover {} states, model has {n}", features.n_states())));
    }
    let mut report = VerifyReport::default();
    let class = Arc::new(PolicyClass::tabular(model));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let random_theta: Vec<f64> = (0..class.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let policies = [
        ("uniform", SoftmaxPolicy::zeros(class.clone())),
        ("random", SoftmaxPolicy::new(class.clone(), random_theta)),
    ];
    let gamma = vec![0.5; model.n_constraints()];

    if let Err(e) = model.structural_ergodicity() {
        report.push("structural ergodicity", false, e);
        let a = assumption_report(model, &policies[0].1, &gamma, features);
        report.push("bounded features", a.bounded_features(), format!("max ‖f_s‖ = {}", a.max_feature_norm));
        return Ok(report);
    }
    report.push("structural ergodicity", true, "irreducible and aperiodic");

    for (label, pol) in &policies {
        let p = oracle::chain_matrix(model, pol);
        let lu = oracle::stationary_of_chain(&p)?;
        let pw = oracle::power_iteration(&p)?;
        let gap = (&lu - &pw).amax();
        let res = oracle::stationary_residual(&p, &lu);
        report.push(
            &format!("stationary law ({label})"),
            gap <= STATIONARY_AGREEMENT_TOL && res <= oracle::STATIONARY_RESIDUAL_TOL,
            format!("|LU − power|∞ = {gap:.2e}, residual {res:.2e}"),
        );
    }

    for (label, pol) in &policies {
        let sol = ExactSolution::compute(model, pol, &gamma, features)?;
        let (err, how) = gradient_error(model, pol, &gamma, &sol.grad, &mut rng)?;
        report.push(
            &format!("gradient vs finite differences ({label})"),
            err <= GRADIENT_REL_TOL,
            format!("relative error {err:.2e} ({how})"),
        );

        let mut adv = 0.0f64;
        let mut score = 0.0f64;
        let scale = sol.diff_action_value.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
        for s in 0..n {
            let probs = pol.action_probs(s);
            let mean_adv: f64 = probs.iter().enumerate().map(|(l, p)| p * sol.advantage(s, l)).sum();
            adv = adv.max(mean_adv.abs() / scale);
            let mut acc = vec![0.0; pol.dim()];
            for (l, p) in probs.iter().enumerate() {
                pol.class().score_with_probs(s, l, &probs).axpy(*p, &mut acc);
            }
            score = score.max(acc.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        }
        report.push(&format!("zero-mean advantage ({label})"), adv <= 1e-9, format!("max |Σπ·A| / scale = {adv:.2e}"));
        report.push(&format!("zero-mean score ({label})"), score <= 1e-12, format!("max |Σπ·Ψ| = {score:.2e}"));
        let td = sol.td.residual();
        report.push(
            &format!("critic fixed point ({label})"),
            td <= TD_RESIDUAL_TOL,
            format!("‖Av* + b‖∞ = {td:.2e}{}", if sol.td.degenerate { ", A singular" } else { "" }),
        );
    }

    let a = assumption_report(model, &policies[1].1, &gamma, features);
    report.push("bounded features", a.bounded_features(), format!("max ‖f_s‖ = {}", a.max_feature_norm));
    report.push(
        "uniform ergodicity",
        a.ergodic(),
        match a.ergodicity_fit {
            Some(f) => format!("TV ≤ {:.3}·{:.4}^t", f.b, f.k),
            None => "no fit".into(),
        },
    );
    report.push(
        "negative definite critic matrix",
        a.negative_definite(),
        match a.lambda_e {
            Some(l) => format!("λ_e = {l:.3e}"),
            None => "not computed".into(),
        },
    );
    report.push(
        "score bound",
        true,
        format!("D = {}, ε_app = {}", a.score_bound, a.eps_app.map_or("n/a".into(), |e| format!("{e:.3e}"))),
    );
    Ok(report)
}

fn gradient_error(
    model: &TabularCmdp,
    pol: &SoftmaxPolicy,
    gamma: &[f64],
    grad: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, &'static str), HarnessError> {
    let d = pol.dim();
    let lag = |theta: Vec<f64>| -> Result<f64, HarnessError> {
        Ok(oracle::exact_lagrangian(model, &pol.with_theta(theta), gamma)?.lagrangian)
    };
    let along = |dir: &[f64]| -> Result<f64, HarnessError> {
        let plus: Vec<f64> = pol.theta().iter().zip(dir).map(|(t, u)| t + FD_STEP * u).collect();
        let minus: Vec<f64> = pol.theta().iter().zip(dir).map(|(t, u)| t - FD_STEP * u).collect();
        Ok((lag(plus)? - lag(minus)?) / (2.0 * FD_STEP))
    };
    if d <= FULL_FD_MAX_DIM {
        let mut fd = DVector::zeros(d);
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            fd[i] = along(&e)?;
        }
        let err = (grad - &fd).norm() / fd.norm().max(grad.norm()).max(1e-8);
        Ok((err, "all coordinates"))
    } else {
        let mut worst = 0.0f64;
        for _ in 0..FD_DIRECTIONS {
            let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let u: Vec<f64> = u.iter().map(|x| x / un).collect();
            let fd = along(&u)?;
            let exact: f64 = grad.iter().zip(&u).map(|(g, x)| g * x).sum();
            worst = worst.max((fd - exact).abs() / grad.norm().max(1e-8));
        }
        Ok((worst, "random directions"))
    }
}
