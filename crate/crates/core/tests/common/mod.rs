//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls the code it is used to check: the scorer, the planner
//! and the repair grid are re-derived from their definitions.

#![allow(dead_code)]

use novelty_repair::agent::{records_to_csv, simulate_trials};
use novelty_repair::domain_model::{
    is_terminal, simulate_plan, step_model, PlanningProblem, TIME_STEP,
};
use novelty_repair::environment::EnvConfig;
use novelty_repair::planner::{run_plan_execute, CostWeights};
use novelty_repair::{
    Action, AgentKind, DomainModel, Environment, ExperimentConfig, FluentName, NoveltyEvent, Plan,
    PlannerConfig, State, Trajectory,
};

/// `sum_i gamma^i * sqrt(sum_k w_k (o_ik - e_ik)^2)` over the common prefix,
/// with the power recomputed from scratch at every index.
pub fn brute_score(expected: &[State], observed: &[State], gamma: f64, weights: [f64; 4]) -> f64 {
    let m = expected.len().min(observed.len());
    let mut total = 0.0;
    for i in 0..m {
        let mut power = 1.0;
        for _ in 0..i {
            power *= gamma;
        }
        let e = expected[i].to_array();
        let o = observed[i].to_array();
        let mut sq = 0.0;
        for k in 0..4 {
            sq += weights[k] * (o[k] - e[k]) * (o[k] - e[k]);
        }
        total += power * sq.sqrt();
    }
    total
}

fn cost(model: &DomainModel, s: &State, w: &CostWeights, penalty: f64) -> f64 {
    let c = w.theta * s.theta * s.theta
        + w.theta_dot * s.theta_dot * s.theta_dot
        + w.x * s.x * s.x
        + w.x_dot * s.x_dot * s.x_dot;
    if is_terminal(model, s) {
        c + penalty
    } else {
        c
    }
}

/// Exhaustive depth-first search over all `2^depth` action sequences.
///
/// Terminal states freeze and keep paying their cost. Among equal costs the
/// sequence visited first wins, and Left is always visited before Right, so
/// ties resolve lexicographically.
pub fn exhaustive_best(
    model: &DomainModel,
    s: &State,
    depth: usize,
    w: &CostWeights,
    penalty: f64,
) -> (Vec<Action>, f64) {
    struct Search<'a> {
        model: &'a DomainModel,
        w: &'a CostWeights,
        penalty: f64,
        depth: usize,
        path: Vec<Action>,
        best: Option<(Vec<Action>, f64)>,
    }
    impl Search<'_> {
        fn go(&mut self, s: State, terminal: bool, acc: f64) {
            if self.path.len() == self.depth {
                if self.best.as_ref().is_none_or(|(_, c)| acc < *c) {
                    self.best = Some((self.path.clone(), acc));
                }
                return;
            }
            for a in [Action::Left, Action::Right] {
                let next = if terminal {
                    s
                } else {
                    step_model(self.model, &s, a, TIME_STEP)
                };
                let next_terminal = terminal || is_terminal(self.model, &next);
                self.path.push(a);
                self.go(
                    next,
                    next_terminal,
                    acc + cost(self.model, &next, self.w, self.penalty),
                );
                self.path.pop();
            }
        }
    }
    let mut search = Search {
        model,
        w,
        penalty,
        depth,
        path: Vec::with_capacity(depth),
        best: None,
    };
    search.go(*s, false, 0.0);
    search.best.expect("depth >= 1")
}

/// One episode in an environment with `truth`, planned with the nominal
/// model: the situation the repair search faces right after a novelty.
pub fn nominal_episode(truth: DomainModel, seed: u64, episode: usize) -> (Plan, Trajectory) {
    let mut env = Environment::new(EnvConfig {
        true_fluents: truth,
        seed,
        ..EnvConfig::default()
    })
    .unwrap();
    let s0 = env.reset(episode);
    let problem = PlanningProblem::new(s0, env.max_steps()).unwrap();
    let exec = run_plan_execute(
        &DomainModel::NOMINAL,
        &mut env,
        &problem,
        &PlannerConfig::default(),
    );
    (exec.executed_plan, exec.trajectory)
}

/// Score of `model` against a recorded episode, via the brute-force scorer.
pub fn oracle_score(model: &DomainModel, plan: &Plan, tau: &Trajectory, gamma: f64) -> f64 {
    let expected = simulate_plan(model, tau.initial_state(), plan);
    brute_score(&expected, &tau.states(), gamma, [1.0; 4])
}

#[derive(Debug, Clone)]
pub struct GridPoint {
    /// Signed step count per listed fluent.
    pub counts: Vec<i32>,
    pub steps_used: u32,
    pub score: f64,
}

impl GridPoint {
    pub fn support(&self, fluents: &[FluentName]) -> Vec<FluentName> {
        fluents
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c != 0)
            .map(|(&f, _)| f)
            .collect()
    }
}

/// Every net step-count vector over `fluents` using at most `max_steps`
/// operator applications, scored against the episode. Invalid models
/// (non-positive fluents) are skipped.
pub fn repair_grid(
    base: &DomainModel,
    fluents: &[FluentName],
    step: f64,
    max_steps: u32,
    plan: &Plan,
    tau: &Trajectory,
    gamma: f64,
) -> Vec<GridPoint> {
    fn rec(i: usize, budget: u32, counts: &mut Vec<i32>, out: &mut Vec<Vec<i32>>, n: usize) {
        if i == n {
            out.push(counts.clone());
            return;
        }
        let b = budget as i32;
        for c in -b..=b {
            counts.push(c);
            rec(i + 1, budget - c.unsigned_abs(), counts, out, n);
            counts.pop();
        }
    }
    let mut vectors = Vec::new();
    rec(0, max_steps, &mut Vec::new(), &mut vectors, fluents.len());
    vectors
        .into_iter()
        .filter_map(|counts| {
            let mut values = *base.values();
            for (&f, &c) in fluents.iter().zip(&counts) {
                values[f.index()] += c as f64 * step;
            }
            let model = DomainModel::new(values).ok()?;
            Some(GridPoint {
                steps_used: counts.iter().map(|c| c.unsigned_abs()).sum(),
                score: oracle_score(&model, plan, tau, gamma),
                counts,
            })
        })
        .collect()
}

/// The consistent grid point with the fewest steps, lowest score among those.
pub fn minimal_consistent(grid: &[GridPoint], threshold: f64) -> Option<&GridPoint> {
    grid.iter().filter(|p| p.score < threshold).min_by(|a, b| {
        a.steps_used
            .cmp(&b.steps_used)
            .then(a.score.total_cmp(&b.score))
    })
}

/// Default experiment with one novelty event at episode 7.
pub fn scenario(overrides: &[(FluentName, f64)], agent: AgentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        agent,
        ..ExperimentConfig::default()
    };
    if !overrides.is_empty() {
        cfg.env.novelty_schedule = vec![NoveltyEvent::new(7, overrides.iter().copied())];
    }
    cfg
}

pub const N1: [(FluentName, f64); 2] = [(FluentName::LengthPole, 1.1), (FluentName::Gravity, 12.0)];
pub const N2: [(FluentName, f64); 2] = [(FluentName::LengthPole, 1.1), (FluentName::MassCart, 0.9)];
pub const GRAVITY_ONLY: [(FluentName, f64); 1] = [(FluentName::Gravity, 12.0)];

/// CSV bytes of a full simulated experiment.
pub fn csv_bytes(cfg: &ExperimentConfig) -> Vec<u8> {
    let records = simulate_trials(cfg).unwrap();
    let mut buf = Vec::new();
    records_to_csv(&mut buf, &records).unwrap();
    buf
}
