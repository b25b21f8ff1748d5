//! Command implementations behind the `ppa` binary.

pub mod commands;
pub mod config;
pub mod render;

pub use commands::{
    cmd_estimate, cmd_gen, cmd_plan, cmd_run, load_data, EstimateReport, RunReport, StrategySelection,
};
pub use config::{Config, Overrides};
pub use render::{format_human, render_decision_tree, Unit};
