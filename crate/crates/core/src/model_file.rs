//! JSON model files.
//!
//! Schema (`format = "cmdpac-model"`, `version = 1`):
//!
//! ```text
//! {
//!   "format": "cmdpac-model",
//!   "version": 1,
//!   "n_states": 2,
//!   "n_actions": 2,
//!   "initial_state": 0,
//!   "cost_bound": 4.0,
//!   "alphas": [0.5],
//!   "feasible_actions": [[0, 1], [0, 1]],
//!   "transitions": [
//!     { "s": 0, "a": 0, "next": 1, "p": 0.8,
//!       "cost": { "kind": "deterministic", "value": 2.0 },
//!       "constraints": [ { "kind": "discrete_uniform_int", "lo": 2, "hi": 4 } ] },
//!     ...
//!   ],
//!   "state_features": [[1.0, 0.0], [0.0, 1.0]]      (optional)
//! }
//! ```
//!
//! Cost laws use the tags `deterministic` (`value`), `discrete_uniform_int`
//! (`lo`, `hi`) and `categorical` (`values`, `probs`). Floats are written in
//! shortest round-trip form, so load/save is bit-exact. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::features::StateFeatures;
use crate::mdp::{CmdpBuilder, CostDistribution, TabularCmdp};

pub const FORMAT_TAG: &str = "cmdpac-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRecord {
    pub s: usize,
    pub a: usize,
    pub next: usize,
    pub p: f64,
    pub cost: CostDistribution,
    pub constraints: Vec<CostDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub n_states: usize,
    pub n_actions: usize,
    pub initial_state: usize,
    pub cost_bound: f64,
    pub alphas: Vec<f64>,
    pub feasible_actions: Vec<Vec<usize>>,
    pub transitions: Vec<TransitionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_features: Option<Vec<Vec<f64>>>,
}

impl ModelFile {
    pub fn from_model(model: &TabularCmdp, features: Option<&StateFeatures>) -> Self {
        let mut transitions = Vec::new();
        for s in 0..model.n_states() {
            for (local, &a) in model.feasible_actions(s).iter().enumerate() {
                for o in model.outcomes(s, local) {
                    transitions.push(TransitionRecord {
                        s,
                        a,
                        next: o.next,
                        p: o.prob,
                        cost: o.cost.clone(),
                        constraints: o.constraints.clone(),
                    });
                }
            }
        }
        ModelFile {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            n_states: model.n_states(),
            n_actions: model.n_actions(),
            initial_state: model.initial_state(),
            cost_bound: model.cost_bound(),
            alphas: model.alphas().to_vec(),
            feasible_actions: (0..model.n_states())
                .map(|s| model.feasible_actions(s).to_vec())
                .collect(),
            transitions,
            state_features: features.map(StateFeatures::to_dense_rows),
        }
    }

    pub fn to_model(&self) -> Result<(TabularCmdp, Option<StateFeatures>), ModelError> {
        if self.format != FORMAT_TAG || self.version != FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "expected {FORMAT_TAG} v{FORMAT_VERSION}, found {} v{}",
                self.format, self.version
            )));
        }
        if self.feasible_actions.len() != self.n_states {
            return Err(ModelError::Format("feasible_actions length differs from n_states".into()));
        }
        let mut b = CmdpBuilder::new(self.n_states, self.n_actions, self.alphas.len())
            .alphas(self.alphas.clone())
            .cost_bound(self.cost_bound)
            .initial_state(self.initial_state);
        for (s, acts) in self.feasible_actions.iter().enumerate() {
            b = b.feasible_actions(s, acts.clone());
        }
        for t in &self.transitions {
            b.transition(t.s, t.a, t.next, t.p, t.cost.clone(), t.constraints.clone())?;
        }
        let model = b.build()?;
        let features = match &self.state_features {
            Some(rows) => {
                if rows.len() != self.n_states {
                    return Err(ModelError::Features("one feature row per state required".into()));
                }
                Some(StateFeatures::from_dense_rows(rows.clone())?)
            }
            None => None,
        };
        Ok((model, features))
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save_model(
    path: &Path,
    model: &TabularCmdp,
    features: Option<&StateFeatures>,
) -> Result<(), ModelError> {
    let mut text = ModelFile::from_model(model, features).to_json()?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(TabularCmdp, Option<StateFeatures>), ModelError> {
    let text = std::fs::read_to_string(path)?;
    ModelFile::from_json(&text)?.to_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fixture_round_trip_is_exact() {
        let fx = fixtures::three_state();
        let file = ModelFile::from_model(&fx.model, Some(&fx.state_features));
        let text = file.to_json().unwrap();
        let (model, features) = ModelFile::from_json(&text).unwrap().to_model().unwrap();
        assert_eq!(model, fx.model);
        assert_eq!(features.unwrap(), fx.state_features);
        let again = ModelFile::from_model(&model, Some(&fx.state_features)).to_json().unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn decimal_probabilities_survive() {
        let text = r#"{"format":"cmdpac-model","version":1,"n_states":1,"n_actions":1,
            "initial_state":0,"cost_bound":1.0,"alphas":[0.1],"feasible_actions":[[0]],
            "transitions":[
              {"s":0,"a":0,"next":0,"p":0.7,"cost":{"kind":"deterministic","value":0.3},
               "constraints":[{"kind":"deterministic","value":0.1}]},
              {"s":0,"a":0,"next":0,"p":0.3,"cost":{"kind":"deterministic","value":0.9},
               "constraints":[{"kind":"deterministic","value":0.2}]}]}"#;
        let file = ModelFile::from_json(text).unwrap();
        let (model, _) = file.to_model().unwrap();
        assert_eq!(model.outcomes(0, 0)[0].prob, 0.7);
        assert_eq!(model.outcomes(0, 0)[1].prob, 0.3);
        assert_eq!(ModelFile::from_model(&model, None), file);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"format":"cmdpac-model","version":1,"n_states":1,"n_actions":1,
            "initial_state":0,"cost_bound":1.0,"alphas":[],"feasible_actions":[[0]],
            "transitions":[],"extra":1}"#;
        assert!(ModelFile::from_json(text).is_err());
    }
}
