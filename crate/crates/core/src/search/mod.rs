//! The REINFORCE search loop.

pub mod config;
mod history;
mod reinforce;
mod reward;
mod run;

pub use config::{parse_config, ConfigError, EvaluatorKind, SearchConfig};
pub use history::{op_distribution_history, OpFrequencies};
pub use reinforce::{policy_gradient, reinforce_update, BernoulliPolicy, Policy, UpdateError, UpdateStats};
pub use reward::{shape_reward, shape_reward_eps, Baseline, SHAPING_EPS};
pub use run::*;
