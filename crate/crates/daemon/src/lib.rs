//! The monitoring daemon: state thread, command pipe and HTTP status API.

pub mod api;
pub mod auth;
pub mod engine;
pub mod pipe;
pub mod views;

pub use api::{router, ApiState};
pub use auth::{Role, TokenTable};
pub use engine::{spawn, CommandSender, EngineConfig, EngineHandle, SubmitError};
pub use views::StatusSnapshot;
