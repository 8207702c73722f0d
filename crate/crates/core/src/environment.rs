//! Ground-truth CartPole simulator with a hidden novelty schedule.
//!
//! The environment steps with the same function as the agent's model; only
//! its fluent values differ, and those change at the start of the episode a
//! [`NoveltyEvent`] names. The agent never sees `current_fluents`.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain_model::{
    check_fluent, is_terminal, step_model, Action, DomainModel, FluentName, State, Trajectory,
    TIME_STEP,
};
use crate::error::{EnvError, InvalidField};

/// Fluent overrides taking effect at the start of `episode` (0-based) and
/// persisting afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoveltyEvent {
    pub episode: usize,
    pub overrides: BTreeMap<FluentName, f64>,
}

impl NoveltyEvent {
    pub fn new(episode: usize, overrides: impl IntoIterator<Item = (FluentName, f64)>) -> Self {
        NoveltyEvent {
            episode,
            overrides: overrides.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub true_fluents: DomainModel,
    pub novelty_schedule: Vec<NoveltyEvent>,
    pub max_steps: usize,
    pub init_range: f64,
    pub sensor_noise_sigma: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            true_fluents: DomainModel::NOMINAL,
            novelty_schedule: Vec::new(),
            max_steps: 200,
            init_range: 0.05,
            sensor_noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), InvalidField> {
        if self.max_steps == 0 {
            return Err(InvalidField::new("env.max_steps", "must be at least 1"));
        }
        if !(self.init_range.is_finite() && self.init_range >= 0.0) {
            return Err(InvalidField::new(
                "env.init_range",
                format!("must be finite and >= 0, got {}", self.init_range),
            ));
        }
        if !(self.sensor_noise_sigma.is_finite() && self.sensor_noise_sigma >= 0.0) {
            return Err(InvalidField::new(
                "env.sensor_noise_sigma",
                format!("must be finite and >= 0, got {}", self.sensor_noise_sigma),
            ));
        }
        let mut seen = BTreeSet::new();
        for (i, event) in self.novelty_schedule.iter().enumerate() {
            if !seen.insert(event.episode) {
                return Err(InvalidField::new(
                    format!("env.novelty_schedule[{i}].episode"),
                    format!("duplicate novelty event for episode {}", event.episode),
                ));
            }
            for (&fluent, &value) in &event.overrides {
                check_fluent(fluent, value).map_err(|e| {
                    InvalidField::new(
                        format!("env.novelty_schedule[{i}].overrides.{fluent}"),
                        e.to_string(),
                    )
                })?;
            }
        }
        Ok(())
    }

    /// True fluents with every event scheduled at or before `episode` applied.
    pub fn fluents_at(&self, episode: usize) -> DomainModel {
        let mut events: Vec<&NoveltyEvent> = self
            .novelty_schedule
            .iter()
            .filter(|e| e.episode <= episode)
            .collect();
        events.sort_by_key(|e| e.episode);
        let mut values = *self.true_fluents.values();
        for event in events {
            for (&fluent, &value) in &event.overrides {
                values[fluent.index()] = value;
            }
        }
        DomainModel::new(values).expect("validated overrides keep fluents positive")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Running,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: State,
    pub terminated: bool,
    pub truncated: bool,
}

pub struct Environment {
    config: EnvConfig,
    current_fluents: DomainModel,
    state: State,
    step_count: usize,
    phase: Phase,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl Environment {
    pub fn new(config: EnvConfig) -> Result<Self, InvalidField> {
        config.validate()?;
        let noise = (config.sensor_noise_sigma > 0.0)
            .then(|| Normal::new(0.0, config.sensor_noise_sigma).expect("sigma validated"));
        Ok(Environment {
            current_fluents: config.true_fluents,
            state: State::ZERO,
            step_count: 0,
            phase: Phase::Idle,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            noise,
            config,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Ground truth. Exposed for tests and diagnostics, never to the agent.
    pub fn current_fluents(&self) -> &DomainModel {
        &self.current_fluents
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    /// Whether the current episode has ended (or was never started).
    pub fn is_finished(&self) -> bool {
        self.phase != Phase::Running
    }

    /// Starts episode `episode_idx` and returns its initial state.
    pub fn reset(&mut self, episode_idx: usize) -> State {
        self.current_fluents = self.config.fluents_at(episode_idx);
        self.step_count = 0;
        let r = self.config.init_range;
        let mut draw = || {
            if r == 0.0 {
                0.0
            } else {
                self.rng.random_range(-r..=r)
            }
        };
        self.state = State::new(draw(), draw(), draw(), draw());
        self.phase = if is_terminal(&self.current_fluents, &self.state) {
            Phase::Finished
        } else {
            Phase::Running
        };
        self.state
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.phase != Phase::Running {
            return Err(EnvError::EpisodeFinished);
        }
        self.state = step_model(&self.current_fluents, &self.state, action, TIME_STEP);
        self.step_count += 1;
        let terminated = is_terminal(&self.current_fluents, &self.state);
        let truncated = self.step_count >= self.config.max_steps;
        if terminated || truncated {
            self.phase = Phase::Finished;
        }
        Ok(StepOutcome {
            observation: self.observe(),
            terminated,
            truncated,
        })
    }

    fn observe(&mut self) -> State {
        match self.noise {
            None => self.state,
            Some(normal) => {
                let mut s = self.state.to_array();
                for v in &mut s {
                    *v += normal.sample(&mut self.rng);
                }
                State::from_array(s)
            }
        }
    }
}

/// Steps survived: completed `env_step` calls, capped at `max_steps`.
pub fn episode_reward(trajectory: &Trajectory, max_steps: usize) -> usize {
    trajectory.len().min(max_steps)
}
