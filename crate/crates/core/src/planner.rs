//! Receding-horizon beam search over push sequences.
//!
//! The planner only ever consults the agent's internal [`DomainModel`], so a
//! wrong model shows up directly as lost reward.

use serde::{Deserialize, Serialize};

use crate::domain_model::{
    is_terminal, step_model, Action, DomainModel, Plan, PlanningProblem, State, Trajectory,
    TIME_STEP,
};
use crate::environment::Environment;
use crate::error::{InvalidField, PlanError};

/// Action sequences are packed into a `u64`, one bit per step.
pub const MAX_LOOKAHEAD: usize = 63;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub theta: f64,
    pub theta_dot: f64,
    pub x: f64,
    pub x_dot: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            theta: 1.0,
            theta_dot: 0.25,
            x: 0.1,
            x_dot: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub lookahead_depth: usize,
    pub beam_width: usize,
    pub replan_interval: usize,
    pub cost_weights: CostWeights,
    pub terminal_penalty: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            lookahead_depth: 30,
            beam_width: 100,
            replan_interval: 1,
            cost_weights: CostWeights::default(),
            terminal_penalty: 1e6,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), InvalidField> {
        if self.lookahead_depth == 0 || self.lookahead_depth > MAX_LOOKAHEAD {
            return Err(InvalidField::new(
                "planner.lookahead_depth",
                format!(
                    "must lie in 1..={MAX_LOOKAHEAD}, got {}",
                    self.lookahead_depth
                ),
            ));
        }
        if self.beam_width == 0 {
            return Err(InvalidField::new(
                "planner.beam_width",
                "must be at least 1",
            ));
        }
        if self.replan_interval == 0 || self.replan_interval > self.lookahead_depth {
            return Err(InvalidField::new(
                "planner.replan_interval",
                format!(
                    "must lie in 1..=lookahead_depth ({}), got {}",
                    self.lookahead_depth, self.replan_interval
                ),
            ));
        }
        let w = &self.cost_weights;
        for (name, value) in [
            ("theta", w.theta),
            ("theta_dot", w.theta_dot),
            ("x", w.x),
            ("x_dot", w.x_dot),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(InvalidField::new(
                    format!("planner.cost_weights.{name}"),
                    format!("must be finite and >= 0, got {value}"),
                ));
            }
        }
        if !(self.terminal_penalty.is_finite() && self.terminal_penalty >= 0.0) {
            return Err(InvalidField::new(
                "planner.terminal_penalty",
                format!("must be finite and >= 0, got {}", self.terminal_penalty),
            ));
        }
        Ok(())
    }
}

/// Quadratic balance cost, plus `terminal_penalty` for failed states.
pub fn state_cost(model: &DomainModel, s: &State, w: &CostWeights, terminal_penalty: f64) -> f64 {
    let cost = w.theta * s.theta * s.theta
        + w.theta_dot * s.theta_dot * s.theta_dot
        + w.x * s.x * s.x
        + w.x_dot * s.x_dot * s.x_dot;
    if is_terminal(model, s) {
        cost + terminal_penalty
    } else {
        cost
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    state: State,
    cost: f64,
    /// Actions so far, first action in the most significant used bit.
    /// `Left` is 0, so integer order is lexicographic order with Left first.
    bits: u64,
    terminal: bool,
}

fn action_bit(action: Action) -> u64 {
    match action {
        Action::Left => 0,
        Action::Right => 1,
    }
}

fn bit_action(bit: u64) -> Action {
    if bit == 0 {
        Action::Left
    } else {
        Action::Right
    }
}

/// Unpacks the first `n` actions of a sequence of length `depth`.
fn unpack(bits: u64, depth: usize, n: usize) -> Vec<Action> {
    (0..n)
        .map(|i| bit_action((bits >> (depth - 1 - i)) & 1))
        .collect()
}

/// A scored full-depth action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSequence {
    pub actions: Vec<Action>,
    pub cost: f64,
}

/// Beam search to `lookahead_depth`, returning the cheapest sequence found.
///
/// A sequence's cost is the sum of [`state_cost`] over its simulated states.
/// Terminal states are absorbing: the state freezes and keeps paying its
/// cost for the remaining steps. Ties go to the lexicographically smaller
/// sequence with `Left < Right`.
pub fn best_sequence(
    model: &DomainModel,
    s: &State,
    cfg: &PlannerConfig,
) -> Result<ScoredSequence, PlanError> {
    let depth = cfg.lookahead_depth;
    let w = &cfg.cost_weights;
    let mut beam = vec![Node {
        state: *s,
        cost: 0.0,
        bits: 0,
        terminal: false,
    }];
    let mut children: Vec<Node> = Vec::with_capacity(cfg.beam_width.saturating_mul(2).min(1 << 20));

    for level in 1..=depth {
        children.clear();
        for node in &beam {
            for action in Action::ALL {
                let next = if node.terminal {
                    node.state
                } else {
                    step_model(model, &node.state, action, TIME_STEP)
                };
                children.push(Node {
                    state: next,
                    cost: node.cost + state_cost(model, &next, w, cfg.terminal_penalty),
                    bits: (node.bits << 1) | action_bit(action),
                    terminal: node.terminal || is_terminal(model, &next),
                });
            }
        }
        if level == 1 && children.iter().all(|c| c.terminal) {
            return Err(PlanError::AllBranchesTerminal);
        }
        let order = |a: &Node, b: &Node| a.cost.total_cmp(&b.cost).then(a.bits.cmp(&b.bits));
        if children.len() > cfg.beam_width {
            children.select_nth_unstable_by(cfg.beam_width - 1, order);
            children.truncate(cfg.beam_width);
        }
        children.sort_unstable_by(order);
        std::mem::swap(&mut beam, &mut children);
    }

    let best = beam[0];
    Ok(ScoredSequence {
        actions: unpack(best.bits, depth, depth),
        cost: best.cost,
    })
}

/// Plans from `s` and returns the first `replan_interval` actions of the
/// best sequence.
pub fn plan_next(model: &DomainModel, s: &State, cfg: &PlannerConfig) -> Result<Plan, PlanError> {
    let mut best = best_sequence(model, s, cfg)?;
    best.actions.truncate(cfg.replan_interval);
    Ok(Plan::new(best.actions, TIME_STEP).expect("TIME_STEP is positive"))
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub trajectory: Trajectory,
    pub executed_plan: Plan,
    /// The planner found no non-terminal first step and the episode was
    /// abandoned early.
    pub gave_up: bool,
}

/// Plans and acts until the environment ends the episode or the horizon is
/// reached. `env` must have just been reset to `problem.initial_state`.
pub fn run_plan_execute(
    model: &DomainModel,
    env: &mut Environment,
    problem: &PlanningProblem,
    cfg: &PlannerConfig,
) -> Execution {
    let mut trajectory = Trajectory::new(problem.initial_state);
    let mut executed_plan = Plan::empty(TIME_STEP).expect("TIME_STEP is positive");
    let mut gave_up = false;

    'episode: while !env.is_finished() && trajectory.len() < problem.horizon {
        let plan = match plan_next(model, &trajectory.last_state(), cfg) {
            Ok(plan) => plan,
            Err(PlanError::AllBranchesTerminal) => {
                gave_up = true;
                break;
            }
        };
        for &action in plan.actions() {
            if env.is_finished() || trajectory.len() >= problem.horizon {
                break 'episode;
            }
            let out = env.step(action).expect("episode checked to be running");
            trajectory.push(action, out.observation);
            executed_plan.push(action);
        }
    }

    Execution {
        trajectory,
        executed_plan,
        gave_up,
    }
}
