//! What the agent loop drives: something that can be observed and acted on.

mod bridge;
mod sim;
mod static_env;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::Action;
use crate::canvas::{CanvasError, Screenshot};

pub use bridge::{stub, BridgeEnvironment, BridgeReply, BridgeRequest};
pub use sim::{FieldSpec, GoalSpec, HotspotSpec, PageSpec, SimScript, Simulator, ValidationError};
pub use static_env::StaticEnvironment;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment is closed")]
    Closed,
    #[error("malformed action: {0}")]
    Malformed(String),
    #[error("action not supported here: {0}")]
    Unsupported(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("remote error: {0}")]
    Remote(String),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error(transparent)]
    Canvas(#[from] CanvasError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    /// A single screenshot; no action changes it.
    Static,
    Interactive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub screenshot: Screenshot,
    pub terminated: bool,
    pub info: String,
}

/// Strip a trailing submit marker: the two characters `\n` or a newline.
pub(crate) fn split_submit(text: &str) -> (&str, bool) {
    if let Some(t) = text.strip_suffix("\\n") {
        (t, true)
    } else if let Some(t) = text.strip_suffix('\n') {
        (t, true)
    } else {
        (text, false)
    }
}

pub trait Environment {
    fn observe(&mut self) -> Result<Screenshot, EnvError>;

    /// Execute `action`. An `Err` is an environment fault.
    fn apply(&mut self, action: &Action) -> Result<StepOutcome, EnvError>;

    fn url(&self) -> String;

    fn kind(&self) -> EnvKind;

    /// Whether a scripted goal holds; `None` when the environment has none.
    fn goal_reached(&self) -> Option<bool> {
        None
    }

    fn close(&mut self) {}
}
