//! Experiment orchestration: regret metrics, JSON-configured runs with
//! deterministic seeds and CSV/JSON artifacts, and named self-check suites.
//!
//! The pieces:
//!
//! * [`RegretSeries`] — per-iteration per-agent equilibrium gaps with the
//!   two prefix-averaged regret notions and their sandwich inequality;
//! * [`ExperimentConfig`] / [`GameSpec`] — schema-validated JSON
//!   configuration of a game, an algorithm, an evaluation schedule, and a
//!   seed batch;
//! * [`run_experiment`] / [`run_batch`] — execute one seed / a whole batch,
//!   writing `config.json`, `metadata.json`, `regret.csv`, parameter
//!   checkpoints, and the cross-seed `plotdata.csv`;
//! * [`run_check`] — fixed-seed invariant batteries (`decay`, `subchain`,
//!   `potentials`, `gradients`, `regret-sandwich`, `critic-fixed-point`,
//!   `chain-example`) with machine-readable reports.

mod checks;
mod config;
mod regret;
mod run;

pub use checks::{run_check, CheckItem, CheckReport, SUITES};
pub use config::{
    parse_seeds, Algorithm, BrKind, Estimator, EvalConfig, ExperimentConfig, GameSpec,
};
pub use regret::RegretSeries;
pub use run::{evaluate_profile, run_batch, run_experiment, BatchOutcome, RunOutcome, RunStatus};

use thiserror::Error;

/// Substream (of the run seed) that draws the initial policy parameters.
pub const THETA_STREAM: u64 = 5;

/// Errors from configuration, orchestration, or persistence.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// Building a configured game failed.
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
    /// An exact-solver evaluation failed.
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    /// A learning run failed.
    #[error(transparent)]
    Actor(#[from] crate::actor::ActorError),
    /// A critic invocation failed.
    #[error(transparent)]
    Critic(#[from] crate::critic::CriticError),
    /// The configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),
    /// A regret query addressed an empty series or prefix.
    #[error("empty regret series (no evaluated iterations in the prefix)")]
    EmptySeries,
    /// `check` was asked for a suite that does not exist.
    #[error("unknown check suite `{0}`; available: decay, subchain, potentials, gradients, regret-sandwich, critic-fixed-point, chain-example")]
    UnknownSuite(String),
    /// Filesystem failure while writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    /// CSV write failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
