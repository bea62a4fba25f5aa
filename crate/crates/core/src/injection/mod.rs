//! Engine-agnostic runtime state patching contract.
//!
//! A runtime adapter exposes a live game session through which the harness
//! controls what entities exist ([`StatePatchOp::Spawn`] /
//! [`StatePatchOp::Remove`]) and what values they hold
//! ([`StatePatchOp::Set`]), drives a bounded interaction, and reads back
//! state snapshots and events. Adapters speak the newline-delimited JSON
//! protocol in [`wire`]; in-process adapters implement [`RuntimeSession`]
//! directly.

pub mod state;
pub mod subprocess;
pub mod wire;

mod session;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use session::{ActOutcome, OpResult, PatchReport, RuntimeFactory, RuntimeSession, SessionError};
pub use state::{PatchError, PatchErrorKind};
pub use subprocess::{CommandRuntime, RuntimeCommand, SubprocessSession};

/// One state patching operation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StatePatchOp {
    Spawn {
        entity_type: String,
        id: String,
        #[serde(default)]
        props: BTreeMap<String, Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parent: Option<String>,
    },
    Remove {
        id: String,
    },
    Set {
        path: String,
        value: Value,
    },
}

impl StatePatchOp {
    pub fn set(path: impl Into<String>, value: impl Into<Value>) -> Self {
        StatePatchOp::Set {
            path: path.into(),
            value: value.into(),
        }
    }

    pub fn spawn<I, K>(entity_type: &str, id: &str, props: I) -> Self
    where
        I: IntoIterator<Item = (K, Value)>,
        K: Into<String>,
    {
        StatePatchOp::Spawn {
            entity_type: entity_type.to_string(),
            id: id.to_string(),
            props: props.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            parent: None,
        }
    }

    pub fn remove(id: &str) -> Self {
        StatePatchOp::Remove { id: id.to_string() }
    }
}

fn one_tick() -> u32 {
    1
}

/// A single action followed by `ticks` fixed-step frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionStep {
    pub action: String,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    #[serde(default = "one_tick")]
    pub ticks: u32,
}

impl ActionStep {
    pub fn new(action: &str) -> Self {
        ActionStep {
            action: action.to_string(),
            params: BTreeMap::new(),
            ticks: 1,
        }
    }

    pub fn param(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.params.insert(name.to_string(), value.into());
        self
    }

    pub fn ticks(mut self, ticks: u32) -> Self {
        self.ticks = ticks;
        self
    }
}

/// Runtime state at a given tick.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub state: Value,
}

impl Snapshot {
    /// Looks up a dot-separated path. Numeric segments index into lists.
    pub fn get(&self, path: &str) -> Option<&Value> {
        state::lookup(&self.state, path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub data: BTreeMap<String, Value>,
}

impl Event {
    pub fn new(tick: u64, kind: &str) -> Self {
        Event {
            tick,
            kind: kind.to_string(),
            data: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: Value) -> Self {
        self.data.insert(key.to_string(), value);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: usize,
    pub accepted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceStatus {
    Completed,
    RuntimeCrash,
    Timeout,
}

impl fmt::Display for EvidenceStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvidenceStatus::Completed => "completed",
            EvidenceStatus::RuntimeCrash => "runtime_crash",
            EvidenceStatus::Timeout => "timeout",
        })
    }
}

/// Everything observed while executing one verification unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// State after injection, before interaction.
    pub pre: Snapshot,
    pub post: Snapshot,
    pub events: Vec<Event>,
    pub action_trace: Vec<StepOutcome>,
    pub logs: Vec<String>,
    pub status: EvidenceStatus,
    pub duration_ms: u64,
}

impl Evidence {
    /// Canonical bytes of every field except the wall-clock duration.
    pub fn replay_bytes(&self) -> Vec<u8> {
        let mut view = self.clone();
        view.duration_ms = 0;
        serde_json::to_vec(&view).expect("evidence serializes")
    }
}

/// Type tags used by [`RuntimeSchema`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeTag {
    Number,
    Bool,
    String,
    /// Grid cell: a list of exactly two integer coordinates in `0..=9`.
    Cell,
    /// One coordinate of a [`TypeTag::Cell`].
    Coord,
    Map,
    /// Dynamic map of entity id to entity record.
    Entities,
}

impl TypeTag {
    pub fn is_numeric(self) -> bool {
        matches!(self, TypeTag::Number | TypeTag::Coord)
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("tag serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// Machine-readable parameter structure reported by a runtime at launch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSchema {
    pub state_paths: BTreeMap<String, TypeTag>,
    pub actions: BTreeMap<String, BTreeMap<String, TypeTag>>,
    pub entity_types: BTreeMap<String, BTreeMap<String, TypeTag>>,
    pub events: Vec<String>,
}

/// Entity props every record carries that cannot be patched.
pub const RESERVED_PROPS: [&str; 2] = ["type", "parent"];

impl RuntimeSchema {
    /// Statically resolves a state path to its type.
    ///
    /// Entity paths (`entities.<id>.<prop>`) resolve if any declared entity
    /// type has `<prop>`; the entity id itself is not checked.
    pub fn resolve(&self, path: &str) -> Option<TypeTag> {
        if let Some(tag) = self.state_paths.get(path) {
            return Some(*tag);
        }
        let segments: Vec<&str> = path.split('.').collect();
        for split in (1..segments.len()).rev() {
            let prefix = segments[..split].join(".");
            let Some(tag) = self.state_paths.get(&prefix) else {
                continue;
            };
            let rest = &segments[split..];
            return match (tag, rest) {
                (TypeTag::Cell, [i]) if is_coord_index(i) => Some(TypeTag::Coord),
                (TypeTag::Entities, [_id]) => Some(TypeTag::Map),
                (TypeTag::Entities, [_id, prop]) => self.entity_prop(prop),
                (TypeTag::Entities, [_id, prop, i]) if is_coord_index(i) => {
                    (self.entity_prop(prop) == Some(TypeTag::Cell)).then_some(TypeTag::Coord)
                }
                _ => None,
            };
        }
        None
    }

    fn entity_prop(&self, prop: &str) -> Option<TypeTag> {
        if RESERVED_PROPS.contains(&prop) {
            return Some(TypeTag::String);
        }
        self.entity_types
            .values()
            .find_map(|props| props.get(prop).copied())
    }

    /// Path of the entity container, if the runtime declares one.
    pub fn entities_root(&self) -> Option<&str> {
        self.state_paths
            .iter()
            .find(|(_, tag)| **tag == TypeTag::Entities)
            .map(|(path, _)| path.as_str())
    }

    /// Checks that every declared path hangs off a declared map.
    pub fn check(&self) -> Result<(), String> {
        for path in self.state_paths.keys() {
            if path.is_empty() || path.split('.').any(str::is_empty) {
                return Err(format!("malformed state path `{path}`"));
            }
            if let Some((parent, _)) = path.rsplit_once('.') {
                match self.state_paths.get(parent) {
                    Some(TypeTag::Map) => {}
                    _ => return Err(format!("`{path}` has no declared map parent")),
                }
            }
        }
        for (name, props) in &self.entity_types {
            for (prop, tag) in props {
                if RESERVED_PROPS.contains(&prop.as_str()) {
                    return Err(format!("entity type `{name}` redeclares reserved prop `{prop}`"));
                }
                if matches!(tag, TypeTag::Map | TypeTag::Entities | TypeTag::Coord) {
                    return Err(format!("entity prop `{name}.{prop}` has non-leaf type {tag}"));
                }
            }
        }
        if !self.entity_types.is_empty() && self.entities_root().is_none() {
            return Err("entity types declared without an entities container".into());
        }
        Ok(())
    }
}

pub(crate) fn is_coord_index(s: &str) -> bool {
    s == "0" || s == "1"
}
