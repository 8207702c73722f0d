//! Discounted inconsistency between predicted and observed state sequences.

use serde::{Deserialize, Serialize};

use crate::domain_model::{simulate_plan, DomainModel, Plan, State};
use crate::error::{ConsistencyError, InvalidField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencyConfig {
    pub gamma: f64,
    pub threshold: f64,
    /// Per-dimension weights for `(x, x_dot, theta, theta_dot)`.
    pub dimension_weights: [f64; 4],
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        ConsistencyConfig {
            gamma: 0.95,
            threshold: 0.01,
            dimension_weights: [1.0; 4],
        }
    }
}

impl ConsistencyConfig {
    pub fn validate(&self) -> Result<(), InvalidField> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(InvalidField::new(
                "consistency.gamma",
                format!("must lie in (0, 1), got {}", self.gamma),
            ));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(InvalidField::new(
                "consistency.threshold",
                format!("must be finite and > 0, got {}", self.threshold),
            ));
        }
        if let Some(w) = self
            .dimension_weights
            .iter()
            .find(|w| !(w.is_finite() && **w >= 0.0))
        {
            return Err(InvalidField::new(
                "consistency.dimension_weights",
                format!("weights must be finite and >= 0, got {w}"),
            ));
        }
        Ok(())
    }
}

fn weighted_norm(diff: [f64; 4], weights: &[f64; 4]) -> f64 {
    diff.iter()
        .zip(weights)
        .map(|(d, w)| w * d * d)
        .sum::<f64>()
        .sqrt()
}

/// `sum_i gamma^i * ||observed[i] - expected[i]||` over the common prefix.
///
/// Index 0 is the initial state; if the sequences differ in length only the
/// shorter prefix is compared.
pub fn inconsistency_score(
    expected: &[State],
    observed: &[State],
    cfg: &ConsistencyConfig,
) -> Result<f64, ConsistencyError> {
    if expected.is_empty() || observed.is_empty() {
        return Err(ConsistencyError::EmptySequence);
    }
    let mut discount = 1.0;
    let mut score = 0.0;
    for (e, o) in expected.iter().zip(observed) {
        score += discount * weighted_norm(*o - *e, &cfg.dimension_weights);
        discount *= cfg.gamma;
    }
    Ok(score)
}

/// Novelty is inferred when the score strictly exceeds the threshold.
pub fn detect_novelty(score: f64, cfg: &ConsistencyConfig) -> bool {
    score > cfg.threshold
}

/// States the model predicts for the executed action sequence, ending early
/// if the model expects the episode to terminate.
pub fn expected_trajectory(model: &DomainModel, s0: State, executed_plan: &Plan) -> Vec<State> {
    simulate_plan(model, s0, executed_plan)
}
