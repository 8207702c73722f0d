//! Episode loop, multi-trial experiments and CSV output.
//!
//! Each episode: reset, plan and act with the internal model, score the
//! observed trajectory against the model's prediction for the executed
//! actions, and (for the repairing agent) search for a repair when the score
//! crosses the threshold. The repaired model carries into the next episode.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::consistency::{
    detect_novelty, expected_trajectory, inconsistency_score, ConsistencyConfig,
};
use crate::domain_model::{DomainModel, PlanningProblem};
use crate::environment::{episode_reward, EnvConfig, Environment};
use crate::error::{ConfigError, HarnessError, InvalidField, RepairError};
use crate::planner::{run_plan_execute, PlannerConfig};
use crate::repair::{apply_repair, repair_search, DomainRepair, RepairConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Never changes its model.
    PlanningStatic,
    /// Repairs its model whenever novelty is detected.
    #[default]
    PlanningRepairing,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::PlanningStatic => "planning_static",
            AgentKind::PlanningRepairing => "planning_repairing",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = InvalidField;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "planning_static" => Ok(AgentKind::PlanningStatic),
            "planning_repairing" => Ok(AgentKind::PlanningRepairing),
            other => Err(InvalidField::new(
                "agent",
                format!("expected planning_static or planning_repairing, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub planner: PlannerConfig,
    pub consistency: ConsistencyConfig,
    pub repair: RepairConfig,
    pub agent: AgentKind,
    pub episodes: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub output_path: Option<PathBuf>,
    /// Fill the `wall_time_ms` column. Off by default so that output is
    /// byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvConfig::default(),
            planner: PlannerConfig::default(),
            consistency: ConsistencyConfig::default(),
            repair: RepairConfig::default(),
            agent: AgentKind::default(),
            episodes: 50,
            trials: 5,
            base_seed: 0,
            output_path: None,
            record_wall_time: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|source| ConfigError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<(), InvalidField> {
        self.env.validate()?;
        self.planner.validate()?;
        self.consistency.validate()?;
        self.repair.validate()?;
        if self.episodes == 0 {
            return Err(InvalidField::new("episodes", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(InvalidField::new("trials", "must be at least 1"));
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub trial: usize,
    pub episode: usize,
    pub reward: usize,
    pub inconsistency: f64,
    pub novelty_detected: bool,
    pub repair: Option<DomainRepair>,
    /// Inconsistency of the repaired model on this episode's trajectory.
    pub repair_score: Option<f64>,
    /// The search hit its expansion budget; its best repair was applied.
    pub repair_exhausted: bool,
    /// The internal model after this episode (the one the next episode uses).
    pub repaired_model: DomainModel,
    pub wall_time_ms: Option<f64>,
}

/// Runs one episode and returns its record and the model to carry forward.
pub fn run_episode(
    internal: &DomainModel,
    env: &mut Environment,
    trial: usize,
    episode: usize,
    cfg: &ExperimentConfig,
) -> (EpisodeRecord, DomainModel) {
    let started = Instant::now();
    let s0 = env.reset(episode);
    let problem = PlanningProblem::new(s0, env.max_steps()).expect("max_steps validated >= 1");
    let exec = run_plan_execute(internal, env, &problem, &cfg.planner);

    let observed = exec.trajectory.states();
    let expected = expected_trajectory(internal, s0, &exec.executed_plan);
    let inconsistency =
        inconsistency_score(&expected, &observed, &cfg.consistency).expect("sequences non-empty");
    let novelty_detected = detect_novelty(inconsistency, &cfg.consistency);

    let mut record = EpisodeRecord {
        trial,
        episode,
        reward: episode_reward(&exec.trajectory, env.max_steps()),
        inconsistency,
        novelty_detected,
        repair: None,
        repair_score: None,
        repair_exhausted: false,
        repaired_model: *internal,
        wall_time_ms: None,
    };

    if cfg.agent == AgentKind::PlanningRepairing && novelty_detected && !exec.trajectory.is_empty()
    {
        let mmos = cfg.repair.mmo_set().expect("repair config validated");
        let found = match repair_search(
            &mmos,
            internal,
            &exec.executed_plan,
            &exec.trajectory,
            &cfg.consistency,
            &cfg.repair,
        ) {
            Ok(outcome) => Some((outcome.repair, outcome.score)),
            Err(RepairError::RepairExhausted {
                best, best_score, ..
            }) => {
                record.repair_exhausted = true;
                Some((best, best_score))
            }
            Err(_) => None,
        };
        if let Some((repair, score)) = found {
            record.repaired_model =
                apply_repair(internal, &repair).expect("search only keeps valid repairs");
            record.repair = Some(repair);
            record.repair_score = Some(score);
        }
    }

    if cfg.record_wall_time {
        record.wall_time_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    }
    let updated = record.repaired_model;
    (record, updated)
}

/// One trial: a fresh environment and a nominal internal model.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<EpisodeRecord>, InvalidField> {
    let env_cfg = EnvConfig {
        seed: cfg.trial_seed(trial),
        ..cfg.env.clone()
    };
    let mut env = Environment::new(env_cfg)?;
    let mut internal = DomainModel::NOMINAL;
    let mut records = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let (record, updated) = run_episode(&internal, &mut env, trial, episode, cfg);
        records.push(record);
        internal = updated;
    }
    Ok(records)
}

/// All trials in `(trial, episode)` order, without writing anything.
pub fn simulate_trials(cfg: &ExperimentConfig) -> Result<Vec<EpisodeRecord>, InvalidField> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.trials * cfg.episodes);
    for trial in 0..cfg.trials {
        records.extend(run_trial(cfg, trial)?);
    }
    Ok(records)
}

/// Runs every trial and writes the CSV to `output_path` when one is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let records = simulate_trials(cfg).map_err(ConfigError::from)?;
    if let Some(path) = &cfg.output_path {
        write_records_csv(path, &records)?;
    }
    Ok(records)
}

pub const CSV_HEADER: [&str; 7] = [
    "trial",
    "episode",
    "reward",
    "inconsistency",
    "novelty_detected",
    "repair_json",
    "wall_time_ms",
];

pub fn records_to_csv<W: std::io::Write>(
    writer: W,
    records: &[EpisodeRecord],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.episode.to_string(),
            r.reward.to_string(),
            r.inconsistency.to_string(),
            r.novelty_detected.to_string(),
            r.repair
                .as_ref()
                .map(DomainRepair::to_json)
                .unwrap_or_default(),
            r.wall_time_ms
                .map(|t| format!("{t:.3}"))
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_csv(path: &Path, records: &[EpisodeRecord]) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(|source| HarnessError::Output {
        path: path.to_path_buf(),
        source,
    })?;
    records_to_csv(file, records).map_err(|source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub scores: Vec<f64>,
    pub max_score: f64,
    pub suggested_threshold: f64,
}

/// Scores `episodes` clean episodes: no novelty, and an internal model equal
/// to the environment's true fluents. Sensor noise is kept, since that is
/// what the threshold has to tolerate.
pub fn calibrate(cfg: &ExperimentConfig, episodes: usize) -> Result<Calibration, InvalidField> {
    cfg.validate()?;
    let clean = ExperimentConfig {
        env: EnvConfig {
            novelty_schedule: Vec::new(),
            seed: cfg.base_seed,
            ..cfg.env.clone()
        },
        agent: AgentKind::PlanningStatic,
        ..cfg.clone()
    };
    let mut env = Environment::new(clean.env.clone())?;
    let model = clean.env.true_fluents;
    let scores: Vec<f64> = (0..episodes)
        .map(|episode| {
            run_episode(&model, &mut env, 0, episode, &clean)
                .0
                .inconsistency
        })
        .collect();
    let max_score = scores.iter().copied().fold(0.0, f64::max);
    Ok(Calibration {
        scores,
        max_score,
        suggested_threshold: 2.0 * max_score,
    })
}

/// Runs trial 0 with the repairing agent up to the first detection and
/// returns that episode's record.
pub fn repair_demo(cfg: &ExperimentConfig) -> Result<Option<EpisodeRecord>, InvalidField> {
    cfg.validate()?;
    let demo = ExperimentConfig {
        agent: AgentKind::PlanningRepairing,
        ..cfg.clone()
    };
    let mut env = Environment::new(EnvConfig {
        seed: demo.trial_seed(0),
        ..demo.env.clone()
    })?;
    let mut internal = DomainModel::NOMINAL;
    for episode in 0..demo.episodes {
        let (record, updated) = run_episode(&internal, &mut env, 0, episode, &demo);
        if record.novelty_detected {
            return Ok(Some(record));
        }
        internal = updated;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_kind_parses() {
        assert_eq!(
            "planning_static".parse::<AgentKind>().unwrap(),
            AgentKind::PlanningStatic
        );
        assert_eq!(
            "planning_repairing".parse::<AgentKind>().unwrap(),
            AgentKind::PlanningRepairing
        );
        assert_eq!("dqn".parse::<AgentKind>().unwrap_err().field, "agent");
    }

    #[test]
    fn config_defaults_fill_missing_sections() {
        let cfg = ExperimentConfig::from_json(r#"{"episodes": 3}"#, Path::new("x.json")).unwrap();
        assert_eq!(cfg.episodes, 3);
        assert_eq!(cfg.trials, 5);
        assert_eq!(cfg.planner, PlannerConfig::default());
        assert_eq!(cfg.env.max_steps, 200);
    }

    #[test]
    fn invalid_values_name_their_field() {
        let err =
            ExperimentConfig::from_json(r#"{"planner": {"beam_width": 0}}"#, Path::new("x.json"))
                .unwrap_err();
        assert!(err.to_string().contains("planner.beam_width"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"trials": 0}"#, Path::new("x.json")).unwrap_err();
        assert!(err.to_string().contains("trials"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"bogus": 1}"#, Path::new("x.json")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn matched_episode_is_clean() {
        let cfg = ExperimentConfig::default();
        let mut env = Environment::new(cfg.env.clone()).unwrap();
        let (record, updated) = run_episode(&DomainModel::NOMINAL, &mut env, 0, 0, &cfg);
        assert_eq!(record.reward, 200);
        assert_eq!(record.inconsistency, 0.0);
        assert!(!record.novelty_detected);
        assert!(record.repair.is_none());
        assert!(updated.bitwise_eq(&DomainModel::NOMINAL));
    }

    #[test]
    fn csv_layout() {
        let records = vec![EpisodeRecord {
            trial: 0,
            episode: 1,
            reward: 200,
            inconsistency: 0.5,
            novelty_detected: true,
            repair: Some(DomainRepair::empty()),
            repair_score: Some(0.0),
            repair_exhausted: false,
            repaired_model: DomainModel::NOMINAL,
            wall_time_ms: None,
        }];
        let mut out = Vec::new();
        records_to_csv(&mut out, &records).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "trial,episode,reward,inconsistency,novelty_detected,repair_json,wall_time_ms"
        );
        assert_eq!(
            lines.next().unwrap(),
            r#"0,1,200,0.5,true,"{""mass_cart"":0.0,""mass_pole"":0.0,""length_pole"":0.0,""force_mag"":0.0,""gravity"":0.0,""angle_limit"":0.0,""x_limit"":0.0}","#
        );
    }
}
