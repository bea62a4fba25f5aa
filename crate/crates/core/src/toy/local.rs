//! In-process adapter: the toy engine behind [`RuntimeFactory`] without a
//! subprocess. Useful for examples and fast tests; the stdio server is the
//! production path.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::{BuildSpec, Engine};
use crate::injection::{
    ActOutcome, ActionStep, Event, PatchReport, RuntimeFactory, RuntimeSchema, RuntimeSession,
    SessionError, Snapshot, StatePatchOp,
};

/// Resolves a launch `game` reference against the build a runtime was
/// configured with. The reference names a template, optionally with extra
/// faults (`collider+no_game_over`); it must agree with the configured
/// template when there is one.
pub(crate) fn resolve_launch(configured: Option<&BuildSpec>, game: &str) -> Result<BuildSpec, String> {
    let requested: BuildSpec = game.parse().map_err(|e| format!("{e}"))?;
    match configured {
        None => Ok(requested),
        Some(base) if base.template == requested.template => base
            .with_faults(&requested.faults)
            .map_err(|e| e.to_string()),
        Some(base) => Err(format!(
            "runtime serves `{}`, cannot launch `{game}`",
            base.template
        )),
    }
}

pub(crate) fn validate_steps(steps: &[ActionStep]) -> Result<(), String> {
    match steps.iter().position(|s| s.ticks == 0) {
        Some(i) => Err(format!("step {i} advances zero ticks")),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, Default)]
pub struct LocalRuntime {
    configured: Option<BuildSpec>,
    latency: Option<Duration>,
    contaminated: bool,
    launch_failures: Arc<AtomicU32>,
}

impl LocalRuntime {
    /// A runtime that launches whatever build the `game` reference names.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn serving(build: BuildSpec) -> Self {
        LocalRuntime {
            configured: Some(build),
            ..Self::default()
        }
    }

    /// Sleeps this long inside every `execute` call.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    /// Every session starts from leaked state.
    pub fn contaminated(mut self) -> Self {
        self.contaminated = true;
        self
    }

    /// The next `n` launches fail.
    pub fn failing_launches(self, n: u32) -> Self {
        self.launch_failures.store(n, Ordering::SeqCst);
        self
    }
}

impl RuntimeFactory for LocalRuntime {
    fn launch(
        &self,
        game: &str,
        seed: u64,
        deadline: Option<Instant>,
    ) -> Result<Box<dyn RuntimeSession>, SessionError> {
        let pending = self
            .launch_failures
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1));
        if pending.is_ok() {
            return Err(SessionError::Launch("injected launch failure".into()));
        }
        let build = resolve_launch(self.configured.as_ref(), game).map_err(SessionError::Launch)?;
        let mut engine = Engine::launch(build, seed);
        if self.contaminated {
            engine.contaminate();
        }
        Ok(Box::new(LocalSession {
            build_id: engine.build().id(),
            engine: Some(engine),
            latency: self.latency,
            deadline,
        }))
    }
}

pub struct LocalSession {
    engine: Option<Engine>,
    build_id: String,
    latency: Option<Duration>,
    deadline: Option<Instant>,
}

impl LocalSession {
    fn engine(&mut self) -> Result<&mut Engine, SessionError> {
        self.engine.as_mut().ok_or(SessionError::Closed)
    }
}

impl RuntimeSession for LocalSession {
    fn build_id(&self) -> &str {
        &self.build_id
    }

    fn schema(&self) -> &RuntimeSchema {
        static EMPTY: std::sync::OnceLock<RuntimeSchema> = std::sync::OnceLock::new();
        match &self.engine {
            Some(engine) => engine.schema(),
            None => EMPTY.get_or_init(RuntimeSchema::default),
        }
    }

    fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    fn apply_patch(&mut self, ops: &[StatePatchOp]) -> Result<PatchReport, SessionError> {
        Ok(self.engine()?.apply_patch(ops))
    }

    fn execute(&mut self, steps: &[ActionStep]) -> Result<ActOutcome, SessionError> {
        validate_steps(steps).map_err(|message| SessionError::Remote {
            code: "invalid-step".into(),
            message,
        })?;
        if let Some(latency) = self.latency {
            let wake = Instant::now() + latency;
            match self.deadline {
                Some(deadline) if deadline < wake => {
                    std::thread::sleep(deadline.saturating_duration_since(Instant::now()));
                    self.engine = None;
                    return Err(SessionError::Timeout);
                }
                _ => std::thread::sleep(latency),
            }
        }
        Ok(self.engine()?.act(steps))
    }

    fn snapshot(&mut self) -> Result<Snapshot, SessionError> {
        Ok(self.engine()?.snapshot())
    }

    fn events(&mut self, since: u64) -> Result<Vec<Event>, SessionError> {
        Ok(self.engine()?.events_since(since))
    }

    fn shutdown(&mut self) {
        self.engine = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{Fault, Template};

    #[test]
    fn launch_resolution() {
        let base = BuildSpec::new(Template::Collider, [Fault::NoGameOver]).unwrap();
        assert_eq!(resolve_launch(Some(&base), "collider").unwrap(), base);
        assert_eq!(
            resolve_launch(Some(&base), "collider+weak_decrement").unwrap().id(),
            "collider+weak_decrement+no_game_over"
        );
        assert!(resolve_launch(Some(&base), "ledger").is_err());
        assert!(resolve_launch(None, "nonexistent").is_err());
    }

    #[test]
    fn shutdown_closes_and_is_idempotent() {
        let mut s = LocalRuntime::new().launch("collider", 7, None).unwrap();
        s.shutdown();
        s.shutdown();
        assert_eq!(s.snapshot().unwrap_err(), SessionError::Closed);
    }

    #[test]
    fn injected_launch_failures_are_consumed() {
        let rt = LocalRuntime::new().failing_launches(2);
        assert!(rt.launch("quest", 0, None).is_err());
        assert!(rt.launch("quest", 0, None).is_err());
        assert!(rt.launch("quest", 0, None).is_ok());
    }
}
