use std::path::PathBuf;

use thiserror::Error;

use crate::domain_model::FluentName;
use crate::repair::DomainRepair;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("fluent {fluent} must be finite and strictly positive, got {value}")]
    InvalidFluent { fluent: FluentName, value: f64 },
    #[error("unknown fluent `{0}`")]
    UnknownFluent(String),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("planning horizon must be at least 1")]
    ZeroHorizon,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("env_step called on a finished episode; call reset first")]
    EpisodeFinished,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("every depth-1 expansion is terminal under the internal model")]
    AllBranchesTerminal,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsistencyError {
    #[error("cannot score an empty state sequence")]
    EmptySequence,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RepairError {
    #[error("repair drives fluent {fluent} to {value}, which is not strictly positive")]
    InvalidRepair { fluent: FluentName, value: f64 },
    #[error("trajectory is empty; nothing to repair against")]
    EmptyTrajectory,
    #[error(
        "repair search exhausted after {expansions} expansions (best inconsistency {best_score})"
    )]
    RepairExhausted {
        best: DomainRepair,
        best_score: f64,
        expansions: usize,
    },
}

/// A config value that fails validation. `field` is the dotted path.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid config value `{field}`: {reason}")]
pub struct InvalidField {
    pub field: String,
    pub reason: String,
}

impl InvalidField {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Invalid(#[from] InvalidField),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write CSV to {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
}
