//! Scenario configuration, single runs, paired comparisons, and output files.

pub mod compare;
pub mod config;
pub mod output;
pub mod sim;

pub use compare::{batch, compare, Comparison, Stat};
pub use config::{ConfigError, ScenarioConfig};
pub use sim::{run_scenario, RunError, RunOptions, RunResult, System};
