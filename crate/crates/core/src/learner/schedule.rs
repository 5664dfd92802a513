use serde::{Deserialize, Serialize};

use crate::error::LearnerError;

/// Power-law step sizes `a(t) = c_a(1+t)^{−ω}`, `b(t) = c_b(1+t)^{−σ}`,
/// `c(t) = c_c(1+t)^{−β}` with `0 < ω < σ < β ≤ 1`.
///
/// `a` drives the critic and the running averages, `b` the actor and `c` the
/// Lagrange multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub c_a: f64,
    pub c_b: f64,
    pub c_c: f64,
    pub omega: f64,
    pub sigma: f64,
    pub beta: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule { c_a: 1.0, c_b: 1.0, c_c: 1.0, omega: 0.4, sigma: 0.6, beta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub critic: f64,
    pub actor: f64,
    pub multiplier: f64,
}

impl StepSizes {
    pub fn min(&self) -> f64 {
        self.critic.min(self.actor).min(self.multiplier)
    }
}

impl StepSchedule {
    pub fn new(c_a: f64, c_b: f64, c_c: f64, omega: f64, sigma: f64, beta: f64) -> Result<Self, LearnerError> {
        let s = StepSchedule { c_a, c_b, c_c, omega, sigma, beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        for (name, c) in [("c_a", self.c_a), ("c_b", self.c_b), ("c_c", self.c_c)] {
            if !(c.is_finite() && c > 0.0) {
                return Err(LearnerError::Schedule(format!("{name} = {c} must be positive")));
            }
        }
        if !(0.0 < self.omega && self.omega < self.sigma && self.sigma < self.beta && self.beta <= 1.0) {
            return Err(LearnerError::Schedule(format!(
                "exponents must satisfy 0 < ω < σ < β ≤ 1, got ({}, {}, {})",
                self.omega, self.sigma, self.beta
            )));
        }
        Ok(())
    }

    pub fn step_sizes(&self, t: u64) -> StepSizes {
        let base = 1.0 + t as f64;
        StepSizes {
            critic: self.c_a * base.powf(-self.omega),
            actor: self.c_b * base.powf(-self.sigma),
            multiplier: self.c_c * base.powf(-self.beta),
        }
    }
}
