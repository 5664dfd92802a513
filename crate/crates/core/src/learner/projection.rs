use serde::{Deserialize, Serialize};

use crate::error::LearnerError;
use crate::linalg::norm;

/// Radius `U_v` of the critic ball and cap `M` on each multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub critic_radius: f64,
    pub multiplier_cap: f64,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        ProjectionSpec { critic_radius: 100.0, multiplier_cap: 100.0 }
    }
}

impl ProjectionSpec {
    pub fn new(critic_radius: f64, multiplier_cap: f64) -> Result<Self, LearnerError> {
        let p = ProjectionSpec { critic_radius, multiplier_cap };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        if !(self.critic_radius.is_finite() && self.critic_radius > 0.0) {
            return Err(LearnerError::Projection(format!("critic radius {} must be positive", self.critic_radius)));
        }
        if !(self.multiplier_cap.is_finite() && self.multiplier_cap > 0.0) {
            return Err(LearnerError::Projection(format!("multiplier cap {} must be positive", self.multiplier_cap)));
        }
        Ok(())
    }

    /// Euclidean projection onto `{‖v‖ ≤ U_v}`, in place. Returns the new norm.
    pub fn project_critic(&self, v: &mut [f64]) -> f64 {
        let r = self.critic_radius;
        let n = norm(v);
        if n <= r {
            return n;
        }
        v.iter_mut().for_each(|x| *x *= r / n);
        let after = norm(v);
        if after > r {
            // one ulp over after rounding
            let shrink = r / after * (1.0 - f64::EPSILON);
            v.iter_mut().for_each(|x| *x *= shrink);
            return norm(v);
        }
        after
    }

    /// `max(0, min(y, M))`
    pub fn project_multiplier(&self, y: f64) -> f64 {
        y.min(self.multiplier_cap).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interior_point_unchanged() {
        let spec = ProjectionSpec::new(2.0, 1.0).unwrap();
        let mut v = vec![0.6, 0.8];
        spec.project_critic(&mut v);
        assert_eq!(v, vec![0.6, 0.8]);
    }

    #[test]
    fn scales_onto_sphere() {
        let spec = ProjectionSpec::new(2.5, 1.0).unwrap();
        let mut v = vec![3.0, 4.0];
        spec.project_critic(&mut v);
        assert_eq!(v, vec![1.5, 2.0]);
    }

    #[test]
    fn multiplier_clamp() {
        let spec = ProjectionSpec::new(1.0, 10.0).unwrap();
        assert_eq!(spec.project_multiplier(-0.3), 0.0);
        assert_eq!(spec.project_multiplier(0.2), 0.2);
        assert_eq!(spec.project_multiplier(11.0), 10.0);
    }

    proptest! {
        #[test]
        fn critic_projection_is_idempotent_and_bounded(
            v in prop::collection::vec(-1e3f64..1e3, 1..12),
            r in 1e-3f64..50.0,
        ) {
            let spec = ProjectionSpec::new(r, 1.0).unwrap();
            let mut once = v.clone();
            spec.project_critic(&mut once);
            prop_assert!(norm(&once) <= r);
            let mut twice = once.clone();
            spec.project_critic(&mut twice);
            prop_assert_eq!(once, twice);
        }
    }
}
