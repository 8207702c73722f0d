//! Open-world CartPole planning with novelty detection and model repair.
//!
//! An agent plans with an internal [`DomainModel`], compares the states it
//! expected against those it observed, and when the discounted inconsistency
//! exceeds a threshold searches the space of fluent edits for a model that
//! explains the observations.

pub mod agent;
pub mod cli;
pub mod consistency;
pub mod domain_model;
pub mod environment;
pub mod error;
pub mod planner;
pub mod repair;

pub use agent::{AgentKind, EpisodeRecord, ExperimentConfig};
pub use consistency::ConsistencyConfig;
pub use domain_model::{Action, DomainModel, FluentName, Plan, State, Trajectory};
pub use environment::{EnvConfig, Environment, NoveltyEvent};
pub use planner::PlannerConfig;
pub use repair::{DomainRepair, Mmo, MmoSet, RepairConfig};
