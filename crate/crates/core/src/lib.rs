//! Reinforcement-learning toolkit for adaptive user interfaces.
//!
//! UI adaptation is modelled as an MDP whose state pairs the current UI
//! configuration with the user's preferred one. A tabular Q-learning agent
//! changes one UI variable per step and is rewarded with a blend of
//! population-level engagement (`G`) and per-user preference alignment (`I`):
//! `R = (1 - sigma) * G + sigma * I`.
//!
//! Module map:
//! - [`domain`]: variables, actions, state encoding
//! - [`reward`]: blended reward, engagement table fitting
//! - [`env`]: episodic environment
//! - [`agent`]: Q-table, epsilon schedule, update rule
//! - [`persist`]: binary Q-table files
//! - [`oracle`]: value iteration and minimum-steps verifiers
//! - [`harness`]: training/evaluation protocols and metrics
//! - [`config`]: JSON run configuration

pub mod agent;
pub mod config;
pub mod domain;
pub mod env;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod persist;
pub mod presets;
pub mod reward;

pub use agent::{epsilon_at, q_update, select_action, Hyperparams, QTable, QTableMeta};
pub use config::RunConfig;
pub use domain::{
    load_domain, ActionKind, ActionSpec, DomainHash, DomainSpec, StateVector, UiConfig, UserPrefs,
    VariableSpec,
};
pub use env::{AdaptationEnv, EnvParams, TerminationCause};
pub use error::{Error, Result};
pub use harness::{evaluate, moving_average, sigma_sweep, train, RunReport};
pub use reward::{GeneralityModel, RewardModel, RewardParams, RewardTiming};
