//! Dot-path addressing over state trees and schema-checked patch application.
//!
//! State trees are JSON values: objects for maps, two-element arrays for grid
//! cells, and scalars at the leaves. Integral numbers are always stored as
//! JSON integers so that serialized snapshots are byte-stable.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::{is_coord_index, RuntimeSchema, StatePatchOp, TypeTag, RESERVED_PROPS};

const MAX_EXACT_INT: f64 = 9_007_199_254_740_992.0;

/// Encodes `f` as a JSON number, integral values without a fraction.
pub fn number(f: f64) -> Value {
    if f.fract() == 0.0 && f.abs() < MAX_EXACT_INT {
        Value::from(f as i64)
    } else {
        Value::from(f)
    }
}

/// Recursively rewrites integral floats as integers.
pub fn normalize(value: &Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => number(n.as_f64().unwrap_or(f64::NAN)),
        Value::Array(items) => Value::Array(items.iter().map(normalize).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), normalize(v)))
                .collect(),
        ),
        other => other.clone(),
    }
}

/// Formats a number the way HUD strings show it: `75`, `12.5`.
pub fn format_number(f: f64) -> String {
    if f.fract() == 0.0 && f.abs() < MAX_EXACT_INT {
        format!("{}", f as i64)
    } else {
        format!("{f}")
    }
}

/// Structural equality with numbers compared by value.
pub fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Array(xs), Value::Array(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| values_equal(x, y))
        }
        (Value::Object(xs), Value::Object(ys)) => {
            xs.len() == ys.len()
                && xs
                    .iter()
                    .all(|(k, x)| ys.get(k).is_some_and(|y| values_equal(x, y)))
        }
        _ => a == b,
    }
}

pub fn lookup<'a>(root: &'a Value, path: &str) -> Option<&'a Value> {
    if path.is_empty() {
        return None;
    }
    path.split('.').try_fold(root, |node, seg| match node {
        Value::Object(map) => map.get(seg),
        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

fn lookup_mut<'a>(root: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    path.split('.').try_fold(root, |node, seg| match node {
        Value::Object(map) => map.get_mut(seg),
        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
        _ => None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatchErrorKind {
    EmptyPath,
    UnknownPath,
    TypeMismatch,
    ReadOnly,
    InvalidId,
    UnknownEntityType,
    DuplicateEntityId,
    UnknownEntity,
    MissingProp,
}

impl PatchErrorKind {
    pub fn code(self) -> &'static str {
        match self {
            PatchErrorKind::EmptyPath => "empty-path",
            PatchErrorKind::UnknownPath => "unknown-path",
            PatchErrorKind::TypeMismatch => "type-mismatch",
            PatchErrorKind::ReadOnly => "read-only",
            PatchErrorKind::InvalidId => "invalid-id",
            PatchErrorKind::UnknownEntityType => "unknown-entity-type",
            PatchErrorKind::DuplicateEntityId => "duplicate-entity-id",
            PatchErrorKind::UnknownEntity => "unknown-entity",
            PatchErrorKind::MissingProp => "missing-prop",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        serde_json::from_value(Value::String(code.to_string())).ok()
    }
}

impl fmt::Display for PatchErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{kind}: {message}")]
pub struct PatchError {
    pub kind: PatchErrorKind,
    pub message: String,
}

impl PatchError {
    fn new(kind: PatchErrorKind, message: impl Into<String>) -> Self {
        PatchError {
            kind,
            message: message.into(),
        }
    }
}

enum Node {
    Tag(TypeTag),
    Entity,
    ReadOnly,
}

fn unknown(path: &str) -> PatchError {
    PatchError::new(PatchErrorKind::UnknownPath, format!("no state at `{path}`"))
}

/// Resolves `path` against the schema and the entities currently present.
fn resolve(schema: &RuntimeSchema, state: &Value, path: &str) -> Result<Node, PatchError> {
    if path.is_empty() {
        return Err(PatchError::new(PatchErrorKind::EmptyPath, "empty path"));
    }
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(unknown(path));
    }
    if let Some(tag) = schema.state_paths.get(path) {
        return Ok(Node::Tag(*tag));
    }
    for split in (1..segments.len()).rev() {
        let prefix = segments[..split].join(".");
        let Some(tag) = schema.state_paths.get(&prefix) else {
            continue;
        };
        let rest = &segments[split..];
        return match (tag, rest) {
            (TypeTag::Cell, [i]) if is_coord_index(i) => Ok(Node::Tag(TypeTag::Coord)),
            (TypeTag::Entities, [id, tail @ ..]) => {
                let record = lookup(state, &prefix)
                    .and_then(|root| root.get(*id))
                    .ok_or_else(|| unknown(path))?;
                let entity_type = record.get("type").and_then(Value::as_str).unwrap_or("");
                match tail {
                    [] => Ok(Node::Entity),
                    [prop] if RESERVED_PROPS.contains(prop) => Ok(Node::ReadOnly),
                    [prop, rest @ ..] => {
                        let tag = schema
                            .entity_types
                            .get(entity_type)
                            .and_then(|props| props.get(*prop))
                            .copied()
                            .ok_or_else(|| unknown(path))?;
                        match (tag, rest) {
                            (tag, []) => Ok(Node::Tag(tag)),
                            (TypeTag::Cell, [i]) if is_coord_index(i) => {
                                Ok(Node::Tag(TypeTag::Coord))
                            }
                            _ => Err(unknown(path)),
                        }
                    }
                }
            }
            _ => Err(unknown(path)),
        };
    }
    Err(unknown(path))
}

fn is_coord(v: &Value) -> bool {
    v.as_f64()
        .is_some_and(|f| f.fract() == 0.0 && (0.0..=9.0).contains(&f))
}

/// Checks a leaf value against its type tag.
pub fn leaf_matches(tag: TypeTag, value: &Value) -> bool {
    match tag {
        TypeTag::Number => value.as_f64().is_some_and(f64::is_finite),
        TypeTag::Bool => value.is_boolean(),
        TypeTag::String => value.is_string(),
        TypeTag::Coord => is_coord(value),
        TypeTag::Cell => value
            .as_array()
            .is_some_and(|xs| xs.len() == 2 && xs.iter().all(is_coord)),
        TypeTag::Map | TypeTag::Entities => false,
    }
}

fn mismatch(path: &str, tag: impl fmt::Display, value: &Value) -> PatchError {
    PatchError::new(
        PatchErrorKind::TypeMismatch,
        format!("`{path}` expects {tag}, got {value}"),
    )
}

fn set_path(
    state: &mut Value,
    schema: &RuntimeSchema,
    path: &str,
    value: &Value,
) -> Result<(), PatchError> {
    match resolve(schema, state, path)? {
        Node::ReadOnly => Err(PatchError::new(
            PatchErrorKind::ReadOnly,
            format!("`{path}` cannot be patched"),
        )),
        Node::Tag(TypeTag::Entities) => Err(mismatch(path, "spawn/remove", value)),
        Node::Tag(TypeTag::Map) | Node::Entity => {
            let Some(fields) = value.as_object() else {
                return Err(mismatch(path, "map", value));
            };
            for (key, child) in fields {
                if key.is_empty() || key.contains('.') {
                    return Err(unknown(&format!("{path}.{key}")));
                }
                set_path(state, schema, &format!("{path}.{key}"), child)?;
            }
            Ok(())
        }
        Node::Tag(tag) => {
            if !leaf_matches(tag, value) {
                return Err(mismatch(path, tag, value));
            }
            let slot = lookup_mut(state, path).ok_or_else(|| unknown(path))?;
            *slot = normalize(value);
            Ok(())
        }
    }
}

fn entities_mut<'a>(
    state: &'a mut Value,
    schema: &RuntimeSchema,
) -> Result<&'a mut Map<String, Value>, PatchError> {
    let root = schema.entities_root().ok_or_else(|| {
        PatchError::new(
            PatchErrorKind::UnknownEntityType,
            "runtime declares no entities",
        )
    })?;
    lookup_mut(state, root)
        .and_then(Value::as_object_mut)
        .ok_or_else(|| unknown(root))
}

/// Applies one operation in place. On error `state` may be partially
/// modified; callers roll back by discarding their working copy.
pub fn apply_op(
    state: &mut Value,
    schema: &RuntimeSchema,
    op: &StatePatchOp,
) -> Result<(), PatchError> {
    match op {
        StatePatchOp::Set { path, value } => set_path(state, schema, path, value),
        StatePatchOp::Remove { id } => {
            let entities = entities_mut(state, schema)?;
            entities.remove(id).map(|_| ()).ok_or_else(|| {
                PatchError::new(PatchErrorKind::UnknownEntity, format!("no entity `{id}`"))
            })
        }
        StatePatchOp::Spawn {
            entity_type,
            id,
            props,
            parent,
        } => {
            if id.is_empty() || id.contains('.') {
                return Err(PatchError::new(
                    PatchErrorKind::InvalidId,
                    format!("invalid entity id `{id}`"),
                ));
            }
            let signature = schema.entity_types.get(entity_type).ok_or_else(|| {
                PatchError::new(
                    PatchErrorKind::UnknownEntityType,
                    format!("unknown entity type `{entity_type}`"),
                )
            })?;
            let entities = entities_mut(state, schema)?;
            if entities.contains_key(id) {
                return Err(PatchError::new(
                    PatchErrorKind::DuplicateEntityId,
                    format!("entity `{id}` already exists"),
                ));
            }
            if let Some(parent) = parent {
                if !entities.contains_key(parent) {
                    return Err(PatchError::new(
                        PatchErrorKind::UnknownEntity,
                        format!("parent `{parent}` does not exist"),
                    ));
                }
            }
            let mut record = Map::new();
            for (prop, value) in props {
                if RESERVED_PROPS.contains(&prop.as_str()) {
                    return Err(PatchError::new(
                        PatchErrorKind::ReadOnly,
                        format!("`{prop}` is reserved"),
                    ));
                }
                let tag = signature
                    .get(prop)
                    .ok_or_else(|| unknown(&format!("{entity_type}.{prop}")))?;
                if !leaf_matches(*tag, value) {
                    return Err(mismatch(prop, tag, value));
                }
                record.insert(prop.clone(), normalize(value));
            }
            if let Some(missing) = signature.keys().find(|p| !props.contains_key(*p)) {
                return Err(PatchError::new(
                    PatchErrorKind::MissingProp,
                    format!("spawn of `{entity_type}` lacks `{missing}`"),
                ));
            }
            record.insert("type".into(), Value::String(entity_type.clone()));
            if let Some(parent) = parent {
                record.insert("parent".into(), Value::String(parent.clone()));
            }
            entities.insert(id.clone(), Value::Object(record));
            Ok(())
        }
    }
}

/// Applies `ops` all-or-nothing. Returns the new state, or the index of the
/// first failing op; the input state is never modified.
pub fn apply_ops(
    state: &Value,
    schema: &RuntimeSchema,
    ops: &[StatePatchOp],
) -> Result<Value, (usize, PatchError)> {
    let mut working = state.clone();
    for (index, op) in ops.iter().enumerate() {
        apply_op(&mut working, schema, op).map_err(|e| (index, e))?;
    }
    Ok(working)
}

enum Expect {
    Leaf(String, Value),
    Present(String),
    Absent(String),
}

impl Expect {
    fn path(&self) -> &str {
        match self {
            Expect::Leaf(p, _) | Expect::Present(p) | Expect::Absent(p) => p,
        }
    }
}

fn overlaps(a: &str, b: &str) -> bool {
    let nested = |long: &str, short: &str| {
        long.len() > short.len() && long.starts_with(short) && long.as_bytes()[short.len()] == b'.'
    };
    a == b || nested(a, b) || nested(b, a)
}

fn flatten_into(path: &str, value: &Value, out: &mut Vec<Expect>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten_into(&format!("{path}.{k}"), v, out);
            }
        }
        other => out.push(Expect::Leaf(path.to_string(), other.clone())),
    }
}

/// Checks that a runtime's reported state actually holds what a successful
/// patch promised. Returns a description of every unrealized effect.
pub fn unrealized_effects(
    ops: &[StatePatchOp],
    schema: &RuntimeSchema,
    state: &Value,
) -> Vec<String> {
    let root = schema.entities_root().unwrap_or("entities");
    let mut expected: Vec<Expect> = Vec::new();
    for op in ops {
        let mut fresh = Vec::new();
        let touched = match op {
            StatePatchOp::Set { path, value } => {
                flatten_into(path, value, &mut fresh);
                path.clone()
            }
            StatePatchOp::Spawn { id, props, .. } => {
                let base = format!("{root}.{id}");
                fresh.push(Expect::Present(base.clone()));
                for (k, v) in props {
                    fresh.push(Expect::Leaf(format!("{base}.{k}"), v.clone()));
                }
                base
            }
            StatePatchOp::Remove { id } => {
                let base = format!("{root}.{id}");
                fresh.push(Expect::Absent(base.clone()));
                base
            }
        };
        expected.retain(|e| !overlaps(e.path(), &touched));
        expected.extend(fresh);
    }
    expected
        .iter()
        .filter_map(|e| match e {
            Expect::Leaf(path, want) => match lookup(state, path) {
                Some(got) if values_equal(got, want) => None,
                got => Some(format!("`{path}` expected {want}, found {got:?}")),
            },
            Expect::Present(path) => lookup(state, path)
                .is_none()
                .then(|| format!("`{path}` expected present")),
            Expect::Absent(path) => lookup(state, path)
                .is_some()
                .then(|| format!("`{path}` expected absent")),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::collections::BTreeMap;

    fn schema() -> RuntimeSchema {
        let mut s = RuntimeSchema::default();
        s.state_paths = BTreeMap::from([
            ("player".into(), TypeTag::Map),
            ("player.hp".into(), TypeTag::Number),
            ("player.pos".into(), TypeTag::Cell),
            ("player.name".into(), TypeTag::String),
            ("entities".into(), TypeTag::Entities),
        ]);
        s.entity_types = BTreeMap::from([(
            "obstacle".into(),
            BTreeMap::from([("pos".into(), TypeTag::Cell)]),
        )]);
        s
    }

    fn state() -> Value {
        json!({"player": {"hp": 100, "pos": [0, 0], "name": "p"}, "entities": {}})
    }

    #[test]
    fn integral_floats_serialize_without_fraction() {
        assert_eq!(number(75.0).to_string(), "75");
        assert_eq!(number(12.5).to_string(), "12.5");
        assert_eq!(normalize(&json!({"a": [1.0, 2.5]})).to_string(), r#"{"a":[1,2.5]}"#);
        assert_eq!(format_number(-25.0), "-25");
    }

    #[test]
    fn lookup_walks_maps_and_lists() {
        let s = state();
        assert_eq!(lookup(&s, "player.pos.1"), Some(&json!(0)));
        assert_eq!(lookup(&s, "player.pos.2"), None);
        assert_eq!(lookup(&s, ""), None);
    }

    #[test]
    fn set_type_mismatch_leaves_state_untouched() {
        let s = state();
        let err = apply_ops(&s, &schema(), &[StatePatchOp::set("player.hp", "x")]).unwrap_err();
        assert_eq!(err.0, 0);
        assert_eq!(err.1.kind, PatchErrorKind::TypeMismatch);
    }

    #[test]
    fn map_set_merges_children() {
        let out = apply_ops(
            &state(),
            &schema(),
            &[StatePatchOp::set("player", json!({"hp": 10.0, "pos": [3, 4]}))],
        )
        .unwrap();
        assert_eq!(out["player"], json!({"hp": 10, "pos": [3, 4], "name": "p"}));
    }

    #[test]
    fn spawn_then_remove_restores_subtree() {
        let s = state();
        let out = apply_ops(
            &s,
            &schema(),
            &[
                StatePatchOp::spawn("obstacle", "o9", [("pos", json!([3, 3]))]),
                StatePatchOp::remove("o9"),
            ],
        )
        .unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn spawn_errors() {
        let sch = schema();
        let kind = |op: StatePatchOp| apply_ops(&state(), &sch, &[op]).unwrap_err().1.kind;
        assert_eq!(
            kind(StatePatchOp::spawn("dragon", "d", Vec::<(&str, Value)>::new())),
            PatchErrorKind::UnknownEntityType
        );
        assert_eq!(
            kind(StatePatchOp::spawn("obstacle", "o", Vec::<(&str, Value)>::new())),
            PatchErrorKind::MissingProp
        );
        assert_eq!(
            kind(StatePatchOp::spawn("obstacle", "a.b", [("pos", json!([1, 1]))])),
            PatchErrorKind::InvalidId
        );
        assert_eq!(kind(StatePatchOp::remove("ghost")), PatchErrorKind::UnknownEntity);
        let dup = apply_ops(
            &state(),
            &sch,
            &[
                StatePatchOp::spawn("obstacle", "o", [("pos", json!([1, 1]))]),
                StatePatchOp::spawn("obstacle", "o", [("pos", json!([2, 2]))]),
            ],
        )
        .unwrap_err();
        assert_eq!(dup.0, 1);
        assert_eq!(dup.1.kind, PatchErrorKind::DuplicateEntityId);
    }

    #[test]
    fn entity_paths_resolve_per_type() {
        let sch = schema();
        let s = apply_ops(
            &state(),
            &sch,
            &[StatePatchOp::spawn("obstacle", "o1", [("pos", json!([1, 1]))])],
        )
        .unwrap();
        let ok = apply_ops(&s, &sch, &[StatePatchOp::set("entities.o1.pos.0", 5)]).unwrap();
        assert_eq!(ok["entities"]["o1"]["pos"], json!([5, 1]));
        let ro = apply_ops(&s, &sch, &[StatePatchOp::set("entities.o1.type", "coin")]);
        assert_eq!(ro.unwrap_err().1.kind, PatchErrorKind::ReadOnly);
        let missing = apply_ops(&s, &sch, &[StatePatchOp::set("entities.o2.pos", json!([1, 1]))]);
        assert_eq!(missing.unwrap_err().1.kind, PatchErrorKind::UnknownPath);
    }

    #[test]
    fn unrealized_effects_uses_last_writer() {
        let sch = schema();
        let ops = [
            StatePatchOp::set("player.hp", 10),
            StatePatchOp::set("player", json!({"hp": 20})),
        ];
        let good = apply_ops(&state(), &sch, &ops).unwrap();
        assert!(unrealized_effects(&ops, &sch, &good).is_empty());
        assert_eq!(unrealized_effects(&ops, &sch, &state()).len(), 1);
    }
}
