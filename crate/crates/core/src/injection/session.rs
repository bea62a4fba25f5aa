use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ActionStep, Event, RuntimeSchema, Snapshot, StatePatchOp, StepOutcome};

/// Outcome of one patch operation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpResult {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl OpResult {
    pub fn ok() -> Self {
        OpResult {
            ok: true,
            code: None,
            message: None,
        }
    }

    pub fn error(code: &str, message: &str) -> Self {
        OpResult {
            ok: false,
            code: Some(code.to_string()),
            message: Some(message.to_string()),
        }
    }
}

/// Per-op results plus the state the runtime ended up in. When an op fails,
/// `results` stops at the failing op and `realized` is the rolled-back state.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchReport {
    pub results: Vec<OpResult>,
    pub realized: Snapshot,
}

impl PatchReport {
    pub fn failure(&self) -> Option<(usize, &OpResult)> {
        self.results.iter().enumerate().find(|(_, r)| !r.ok)
    }

    pub fn is_ok(&self) -> bool {
        self.failure().is_none()
    }
}

/// What a runtime reports back from a bounded interaction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActOutcome {
    pub trace: Vec<StepOutcome>,
    pub events: Vec<Event>,
    pub logs: Vec<String>,
    pub tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("session closed")]
    Closed,
    #[error("runtime did not answer before the deadline")]
    Timeout,
    #[error("runtime crashed: {0}")]
    Crashed(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("runtime error {code}: {message}")]
    Remote { code: String, message: String },
    #[error("launch failed: {0}")]
    Launch(String),
}

/// A live game instance. Calls on one session must be serialized.
pub trait RuntimeSession: Send {
    fn build_id(&self) -> &str;

    fn schema(&self) -> &RuntimeSchema;

    /// Deadline applied to every subsequent call; `None` waits forever.
    fn set_deadline(&mut self, deadline: Option<Instant>);

    fn apply_patch(&mut self, ops: &[StatePatchOp]) -> Result<PatchReport, SessionError>;

    fn execute(&mut self, steps: &[ActionStep]) -> Result<ActOutcome, SessionError>;

    fn snapshot(&mut self) -> Result<Snapshot, SessionError>;

    fn events(&mut self, since: u64) -> Result<Vec<Event>, SessionError>;

    /// Releases every resource. Idempotent.
    fn shutdown(&mut self);
}

/// Launches fresh sessions; one per verification attempt.
pub trait RuntimeFactory: Send + Sync {
    fn launch(
        &self,
        game: &str,
        seed: u64,
        deadline: Option<Instant>,
    ) -> Result<Box<dyn RuntimeSession>, SessionError>;
}
