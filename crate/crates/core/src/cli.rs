//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::agent::{calibrate, repair_demo, run_experiment, AgentKind, ExperimentConfig};
use crate::error::{ConfigError, HarnessError, InvalidField};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "novelty-repair",
    version,
    about = "CartPole planning agent with novelty detection and model repair"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every trial of an experiment and write per-episode records as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_agent)]
        agent: Option<AgentKind>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Fill the wall_time_ms column (output is then not byte-reproducible).
        #[arg(long)]
        wall_time: bool,
    },
    /// Run until the first detected novelty and print the repair found for it.
    RepairDemo {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score clean episodes and suggest a detection threshold.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        episodes: usize,
    },
}

fn parse_agent(s: &str) -> Result<AgentKind, String> {
    s.parse::<AgentKind>().map_err(|e| e.reason)
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<InvalidField> for Failure {
    fn from(e: InvalidField) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => c.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn cli_main<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            agent,
            episodes,
            trials,
            seed,
            out: csv_path,
            wall_time,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(agent) = agent {
                cfg.agent = agent;
            }
            if let Some(episodes) = episodes {
                cfg.episodes = episodes;
            }
            if let Some(trials) = trials {
                cfg.trials = trials;
            }
            if let Some(seed) = seed {
                cfg.base_seed = seed;
            }
            cfg.record_wall_time |= wall_time;
            cfg.output_path = Some(csv_path.clone());
            cfg.validate()?;
            let records = run_experiment(&cfg)?;
            let _ = writeln!(
                err,
                "wrote {} records ({} trials x {} episodes, agent {}) to {}",
                records.len(),
                cfg.trials,
                cfg.episodes,
                cfg.agent,
                csv_path.display()
            );
            Ok(())
        }
        Command::RepairDemo { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            match repair_demo(&cfg)? {
                Some(record) => {
                    let _ = writeln!(
                        err,
                        "novelty detected in episode {} (inconsistency {}, reward {})",
                        record.episode, record.inconsistency, record.reward
                    );
                    if record.repair_exhausted {
                        let _ =
                            writeln!(err, "search budget exhausted; printing best repair found");
                    }
                    if let Some(score) = record.repair_score {
                        let _ = writeln!(err, "repaired inconsistency {score}");
                    }
                    let json = record
                        .repair
                        .map(|r| r.to_json())
                        .unwrap_or_else(|| "null".into());
                    let _ = writeln!(out, "{json}");
                    Ok(())
                }
                None => {
                    let _ = writeln!(err, "no novelty detected in {} episodes", cfg.episodes);
                    let _ = writeln!(out, "null");
                    Ok(())
                }
            }
        }
        Command::Calibrate { config, episodes } => {
            if episodes == 0 {
                return Err(InvalidField::new("episodes", "must be at least 1").into());
            }
            let cfg = ExperimentConfig::load(&config)?;
            let report = calibrate(&cfg, episodes)?;
            let _ = writeln!(out, "max_inconsistency {}", report.max_score);
            let _ = writeln!(out, "suggested_threshold {}", report.suggested_threshold);
            if report.max_score == 0.0 {
                let _ = writeln!(
                    err,
                    "clean episodes are exactly consistent; any positive threshold separates them"
                );
            }
            Ok(())
        }
    }
}
