//! Synthetic grid testbed: generated topologies, simulated site agents and
//! scripted failure scenarios.

mod agents;
mod generate;
mod live;
mod scenario;
mod simulation;
mod world;

use thiserror::Error;

pub use agents::{pick_base_port, Agents};
pub use generate::{generate, random_events, GenParams, Generated, GRIS_ATTRIBUTE};
pub use live::{load_dir, LiveRun};
pub use scenario::{parse_scenario, render_scenario, Action, AgentKind, AgentSpec, Scenario, ScenarioEvent};
pub use simulation::{EventRecord, SimExecutor, Simulation};
pub use world::{Probe, SharedWorld, World};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error(transparent)]
    Config(#[from] gridwatch_core::ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
