//! Scenario orchestration: configuration, the hand-built rate scenarios,
//! runners and file output.

pub mod config;
pub mod testcases;
pub mod output;
pub mod runner;

pub use config::{ConfigError, ScenarioConfig};
pub use runner::{run_scenario, Mode, RunError, RunReport, TestcaseOverrides};
pub use testcases::{load_testcase, Testcase};
