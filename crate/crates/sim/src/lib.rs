//! Scenario-driven simulation of a mixed signal/service vehicle network.

pub mod engine;
pub mod hazards;
pub mod scenario;
pub mod trace;

pub use engine::{run, RunReport, Simulation};
pub use scenario::{load_scenario, ScenarioConfig, ScenarioError};
pub use trace::{export_trace, parse_jsonl, to_jsonl, TraceEvent, TraceKind};
