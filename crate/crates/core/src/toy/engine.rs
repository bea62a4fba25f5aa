use serde_json::Value;

use super::collider::Collider;
use super::ledger::Ledger;
use super::quest::Quest;
use super::{BuildSpec, Template};
use crate::injection::state::apply_ops;
use crate::injection::{
    ActOutcome, ActionStep, Event, OpResult, PatchReport, RuntimeSchema, Snapshot, StatePatchOp,
    StepOutcome,
};

pub(crate) fn f64_at(v: &Value, key: &str) -> Option<f64> {
    v.get(key)?.as_f64()
}

pub(crate) fn str_at<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key)?.as_str()
}

/// Result of applying one action.
pub(crate) struct Entry {
    accepted: bool,
    events: Vec<Event>,
    reason: Option<String>,
}

impl Entry {
    pub(crate) fn accepted(events: Vec<Event>) -> Self {
        Entry {
            accepted: true,
            events,
            reason: None,
        }
    }

    pub(crate) fn rejected(reason: String) -> Self {
        Entry {
            accepted: false,
            events: Vec::new(),
            reason: Some(reason),
        }
    }
}

/// Typed game state for one template.
pub(crate) trait World: Sized + Clone {
    fn initial() -> Self;
    fn schema() -> RuntimeSchema;
    fn from_tree(tree: &Value) -> Option<Self>;
    fn to_tree(&self) -> Value;
    /// Applies one action stamped at `tick`.
    fn step(&mut self, step: &ActionStep, build: &BuildSpec, tick: u64) -> Entry;
    fn refresh_hud(&mut self);
    /// Leaks state from a previous session of the same game.
    fn contaminate(&mut self);
}

#[derive(Clone, Debug, PartialEq)]
enum WorldState {
    Collider(Collider),
    Ledger(Ledger),
    Quest(Quest),
}

macro_rules! dispatch {
    ($state:expr, $w:ident => $body:expr) => {
        match $state {
            WorldState::Collider($w) => $body,
            WorldState::Ledger($w) => $body,
            WorldState::Quest($w) => $body,
        }
    };
}

impl WorldState {
    fn initial(template: Template) -> Self {
        match template {
            Template::Collider => WorldState::Collider(Collider::initial()),
            Template::Ledger => WorldState::Ledger(Ledger::initial()),
            Template::Quest => WorldState::Quest(Quest::initial()),
        }
    }

    fn from_tree(&self, tree: &Value) -> Option<Self> {
        Some(match self {
            WorldState::Collider(_) => WorldState::Collider(Collider::from_tree(tree)?),
            WorldState::Ledger(_) => WorldState::Ledger(Ledger::from_tree(tree)?),
            WorldState::Quest(_) => WorldState::Quest(Quest::from_tree(tree)?),
        })
    }
}

/// Schema reported by a template at launch.
pub fn template_schema(template: Template) -> RuntimeSchema {
    match template {
        Template::Collider => Collider::schema(),
        Template::Ledger => Ledger::schema(),
        Template::Quest => Quest::schema(),
    }
}

/// A running toy game session.
///
/// Time advances only through [`Engine::act`]; each step applies its action
/// on the next tick and then advances `step.ticks` ticks. Seeds are accepted
/// for protocol parity but none of the templates has stochastic state.
#[derive(Clone, Debug)]
pub struct Engine {
    build: BuildSpec,
    seed: u64,
    schema: RuntimeSchema,
    world: WorldState,
    tick: u64,
    events: Vec<Event>,
}

impl Engine {
    pub fn launch(build: BuildSpec, seed: u64) -> Engine {
        Engine {
            schema: template_schema(build.template),
            world: WorldState::initial(build.template),
            build,
            seed,
            tick: 0,
            events: Vec::new(),
        }
    }

    pub fn build(&self) -> &BuildSpec {
        &self.build
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn schema(&self) -> &RuntimeSchema {
        &self.schema
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            tick: self.tick,
            state: dispatch!(&self.world, w => w.to_tree()),
        }
    }

    /// Applies `ops` all-or-nothing.
    pub fn apply_patch(&mut self, ops: &[StatePatchOp]) -> PatchReport {
        let tree = dispatch!(&self.world, w => w.to_tree());
        let results = match apply_ops(&tree, &self.schema, ops) {
            Ok(patched) => match self.world.from_tree(&patched) {
                Some(world) => {
                    self.world = world;
                    vec![OpResult::ok(); ops.len()]
                }
                None => {
                    let mut results = vec![OpResult::ok(); ops.len().saturating_sub(1)];
                    results.push(OpResult::error(
                        "type-mismatch",
                        "patched state does not conform to the template",
                    ));
                    results
                }
            },
            Err((index, error)) => {
                let mut results = vec![OpResult::ok(); index];
                results.push(OpResult::error(error.kind.code(), &error.message));
                results
            }
        };
        PatchReport {
            results,
            realized: self.snapshot(),
        }
    }

    /// Runs the steps in order. Callers validate `ticks >= 1` beforehand.
    pub fn act(&mut self, steps: &[ActionStep]) -> ActOutcome {
        let mut outcome = ActOutcome::default();
        for (index, step) in steps.iter().enumerate() {
            let at = self.tick + 1;
            let build = &self.build;
            let entry = dispatch!(&mut self.world, w => {
                let entry = w.step(step, build, at);
                w.refresh_hud();
                entry
            });
            outcome.logs.push(match &entry.reason {
                None => format!("tick {at}: {} accepted", step.action),
                Some(reason) => format!("tick {at}: {} rejected ({reason})", step.action),
            });
            outcome.trace.push(StepOutcome {
                step: index,
                accepted: entry.accepted,
            });
            outcome.events.extend(entry.events);
            self.tick += u64::from(step.ticks);
        }
        self.events.extend(outcome.events.iter().cloned());
        outcome.tick = self.tick;
        outcome
    }

    /// Events stamped strictly after `since`.
    pub fn events_since(&self, since: u64) -> Vec<Event> {
        self.events
            .iter()
            .filter(|e| e.tick > since)
            .cloned()
            .collect()
    }

    pub fn contaminate(&mut self) {
        dispatch!(&mut self.world, w => w.contaminate());
    }
}
