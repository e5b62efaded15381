//! Experiment configuration, seeded multi-run execution and metric output.

pub mod config;
pub mod metrics;
pub mod output;
pub mod runner;

use thiserror::Error;

use crate::agent::AgentError;
use crate::env::EnvError;
use crate::gp::GpError;

pub use config::{parse_seeds, AgentKind, ChainRef, EpochRule, ExperimentConfig, Overrides, SweepAxes, SweepPoint, Targets};
pub use metrics::MetricRow;
pub use output::{Band, RunStatus, SeriesSummary, Summary};
pub use runner::{execute, plan, report, run_agent, run_experiment, Mode, Outcome, RunResult, RunSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Csv(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("run failed: {0}")]
    Run(String),
}
