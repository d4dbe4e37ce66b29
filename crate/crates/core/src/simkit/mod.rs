//! Scenario configuration, the simulation engine and its reports.

pub mod config;
pub mod engine;
pub mod profiles;
pub mod report;

use thiserror::Error;

pub use config::{CellConfig, ScenarioConfig, UeSpec};
pub use engine::{run, Simulation, SlotStats};
pub use profiles::{Profile, PROFILES};
pub use report::{ecdf, emit_report, Event, EventKind, InjectionOutcome, MetricsReport, ReportFormat, UeMetrics};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    ConfigInvalid(String),
    #[error("i/o failure: {0}")]
    Io(String),
}
