use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::{Budget, Diagnostic, JudgeKind, Keypoint, Specification, Suite, VerificationUnit};
use crate::injection::state::leaf_matches;
use crate::injection::{RuntimeSchema, StatePatchOp, TypeTag, RESERVED_PROPS};
use crate::judge::{parse_with_schema, ParseError};

/// Interaction text split into its individual actions.
fn action_count(text: &str) -> usize {
    text.split(['\n', ';'])
        .flat_map(|s| s.split(" then "))
        .filter(|s| !s.trim().is_empty())
        .count()
}

/// Structural C1-C3 checks on a keypoint.
///
/// Constructibility of P cannot be decided from text, so every keypoint
/// carries a warning deferring it to [`lint_unit`].
pub fn validate_keypoint(kp: &Keypoint, spec: &Specification, limits: &Budget) -> Vec<Diagnostic> {
    let id = kp.id.as_str();
    let mut out = Vec::new();
    if id.is_empty() {
        out.push(Diagnostic::error("empty-id", id, "id", "keypoint id is empty"));
    }
    if spec.element(&kp.element_id).is_none() {
        out.push(Diagnostic::error(
            "dangling-element",
            id,
            "element_id",
            format!("no specification element `{}`", kp.element_id),
        ));
    }
    if kp.precondition.trim().is_empty() {
        out.push(Diagnostic::error("C1-empty-P", id, "precondition", "precondition is empty"));
    }
    let actions = action_count(&kp.interaction);
    if actions == 0 {
        out.push(Diagnostic::error("C2-empty-a", id, "interaction", "interaction is empty"));
    } else if actions > limits.max_actions as usize {
        out.push(Diagnostic::error(
            "C2-unbounded",
            id,
            "interaction",
            format!("{actions} actions exceed the limit of {}", limits.max_actions),
        ));
    }
    if kp.postcondition.trim().is_empty() {
        out.push(Diagnostic::error("C3-empty-Q", id, "postcondition", "postcondition is empty"));
    }
    out.push(Diagnostic::warning(
        "C1-deferred",
        id,
        "precondition",
        "constructibility is checked per unit against the runtime schema",
    ));
    out
}

/// Checks a value written at `path` against the schema, descending into maps
/// the way a patch does.
fn check_value(schema: &RuntimeSchema, path: &str, value: &Value) -> Result<(), (&'static str, String)> {
    let Some(tag) = schema.resolve(path) else {
        return Err(("C1-unknown-path", format!("`{path}` is not in the runtime schema")));
    };
    let reserved = schema
        .entities_root()
        .and_then(|root| path.strip_prefix(root)?.strip_prefix('.'))
        .is_some_and(|rest| matches!(rest.split('.').collect::<Vec<_>>().as_slice(), [_, prop] if RESERVED_PROPS.contains(prop)));
    if reserved {
        return Err(("read-only", format!("`{path}` cannot be patched")));
    }
    match tag {
        TypeTag::Entities => Err(("type-mismatch", format!("`{path}` takes spawn/remove, not set"))),
        TypeTag::Map => {
            let Some(fields) = value.as_object() else {
                return Err(("type-mismatch", format!("`{path}` expects map, got {value}")));
            };
            for (key, child) in fields {
                if key.is_empty() || key.contains('.') {
                    return Err(("C1-unknown-path", format!("`{path}.{key}` is not a valid path")));
                }
                check_value(schema, &format!("{path}.{key}"), child)?;
            }
            Ok(())
        }
        tag if leaf_matches(tag, value) => Ok(()),
        tag => Err(("type-mismatch", format!("`{path}` expects {tag}, got {value}"))),
    }
}

fn lint_patch(unit: &VerificationUnit, schema: &RuntimeSchema, out: &mut Vec<Diagnostic>) {
    let id = unit.id.as_str();
    if unit.patch.is_empty() && !unit.initial_state {
        out.push(Diagnostic::error(
            "empty-patch",
            id,
            "patch",
            "patch is empty and the unit is not marked initial_state",
        ));
    }
    for (i, op) in unit.patch.iter().enumerate() {
        let field = format!("patch[{i}]");
        match op {
            StatePatchOp::Set { path, value } => {
                if let Err((code, message)) = check_value(schema, path, value) {
                    out.push(Diagnostic::error(code, id, &field, message));
                }
            }
            StatePatchOp::Spawn {
                entity_type,
                id: entity,
                props,
                ..
            } => {
                if entity.is_empty() || entity.contains('.') {
                    out.push(Diagnostic::error("invalid-id", id, &field, format!("bad entity id `{entity}`")));
                }
                let Some(signature) = schema.entity_types.get(entity_type) else {
                    out.push(Diagnostic::error(
                        "unknown-entity-type",
                        id,
                        &field,
                        format!("no entity type `{entity_type}`"),
                    ));
                    continue;
                };
                for (prop, value) in props {
                    match signature.get(prop) {
                        None => out.push(Diagnostic::error(
                            "C1-unknown-path",
                            id,
                            &field,
                            format!("`{entity_type}` has no prop `{prop}`"),
                        )),
                        Some(tag) if !leaf_matches(*tag, value) => out.push(Diagnostic::error(
                            "type-mismatch",
                            id,
                            &field,
                            format!("`{entity_type}.{prop}` expects {tag}, got {value}"),
                        )),
                        Some(_) => {}
                    }
                }
                for prop in signature.keys().filter(|p| !props.contains_key(*p)) {
                    out.push(Diagnostic::error(
                        "missing-prop",
                        id,
                        &field,
                        format!("spawn of `{entity_type}` lacks `{prop}`"),
                    ));
                }
            }
            StatePatchOp::Remove { .. } => {}
        }
    }
}

fn lint_interaction(unit: &VerificationUnit, schema: &RuntimeSchema, out: &mut Vec<Diagnostic>) {
    let id = unit.id.as_str();
    let budget = &unit.budget;
    if budget.max_actions == 0 || budget.max_ticks == 0 || budget.timeout_ms == 0 {
        out.push(Diagnostic::error("bad-budget", id, "budget", "budget limits must be positive"));
    }
    if unit.interaction.len() > budget.max_actions as usize {
        out.push(Diagnostic::error(
            "C2-too-many-actions",
            id,
            "interaction",
            format!("{} actions exceed max_actions {}", unit.interaction.len(), budget.max_actions),
        ));
    }
    let ticks: u64 = unit.interaction.iter().map(|s| u64::from(s.ticks)).sum();
    if ticks > u64::from(budget.max_ticks) {
        out.push(Diagnostic::error(
            "C2-too-many-ticks",
            id,
            "interaction",
            format!("{ticks} ticks exceed max_ticks {}", budget.max_ticks),
        ));
    }
    for (i, step) in unit.interaction.iter().enumerate() {
        let field = format!("interaction[{i}]");
        if step.ticks == 0 {
            out.push(Diagnostic::error("zero-ticks", id, &field, "a step must advance at least one tick"));
        }
        let Some(signature) = schema.actions.get(&step.action) else {
            out.push(Diagnostic::error(
                "unknown-action",
                id,
                &field,
                format!("runtime has no action `{}`", step.action),
            ));
            continue;
        };
        for (name, value) in &step.params {
            match signature.get(name) {
                None => out.push(Diagnostic::error(
                    "bad-param",
                    id,
                    &field,
                    format!("`{}` takes no param `{name}`", step.action),
                )),
                Some(tag) if !leaf_matches(*tag, value) => out.push(Diagnostic::error(
                    "bad-param",
                    id,
                    &field,
                    format!("`{}.{name}` expects {tag}, got {value}", step.action),
                )),
                Some(_) => {}
            }
        }
        for name in signature.keys().filter(|n| !step.params.contains_key(*n)) {
            out.push(Diagnostic::error(
                "bad-param",
                id,
                &field,
                format!("`{}` lacks param `{name}`", step.action),
            ));
        }
    }
}

fn lint_expectation(unit: &VerificationUnit, schema: &RuntimeSchema, out: &mut Vec<Diagnostic>) {
    let id = unit.id.as_str();
    if unit.judge == JudgeKind::External {
        if unit.expectation.trim().is_empty() {
            out.push(Diagnostic::error("C3-empty-Q", id, "expectation", "expectation is empty"));
        }
        return;
    }
    let expr = match parse_with_schema(&unit.expectation, Some(schema)) {
        Ok(expr) => expr,
        Err(e @ ParseError::Syntax { .. }) => {
            out.push(Diagnostic::error("C3-parse", id, "expectation", e.to_string()));
            return;
        }
        Err(e @ ParseError::Type { .. }) => {
            out.push(Diagnostic::error("type-mismatch", id, "expectation", e.to_string()));
            return;
        }
    };
    let paths: BTreeSet<&str> = expr.paths().into_iter().collect();
    for path in paths.into_iter().filter(|p| schema.resolve(p).is_none()) {
        out.push(Diagnostic::error(
            "unknown-expectation-path",
            id,
            "expectation",
            format!("`{path}` is neither a state path nor an event"),
        ));
    }
    let events: BTreeSet<&str> = expr.event_types().into_iter().collect();
    for kind in events.into_iter().filter(|k| !schema.events.iter().any(|e| e == k)) {
        out.push(Diagnostic::error(
            "unknown-event",
            id,
            "expectation",
            format!("runtime never emits `{kind}`"),
        ));
    }
}

/// Reviews a unit against the schema the runtime reported at handshake.
pub fn lint_unit(unit: &VerificationUnit, schema: &RuntimeSchema) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if unit.id.is_empty() {
        out.push(Diagnostic::error("empty-id", "", "id", "unit id is empty"));
    }
    lint_patch(unit, schema, &mut out);
    lint_interaction(unit, schema, &mut out);
    lint_expectation(unit, schema, &mut out);
    out
}

/// All keypoint and unit diagnostics for a suite; unit lint runs only when
/// a schema is available.
pub fn validate_suite(suite: &Suite, schema: Option<&RuntimeSchema>, policy: &Budget) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut kp_seen = BTreeMap::new();
    for kp in &suite.keypoints {
        if kp_seen.insert(kp.id.as_str(), ()).is_some() {
            out.push(Diagnostic::error("duplicate-id", &kp.id, "id", "keypoint id repeats"));
        }
        out.extend(validate_keypoint(kp, &suite.spec, policy));
    }
    let mut unit_seen = BTreeSet::new();
    for unit in &suite.units {
        if !unit_seen.insert(unit.id.as_str()) {
            out.push(Diagnostic::error("duplicate-id", &unit.id, "id", "unit id repeats"));
        }
        if suite.keypoint(&unit.keypoint_id).is_none() {
            out.push(Diagnostic::error(
                "dangling-keypoint",
                &unit.id,
                "keypoint_id",
                format!("no keypoint `{}`", unit.keypoint_id),
            ));
        }
        if let Some(schema) = schema {
            out.extend(lint_unit(unit, schema));
        }
    }
    out
}
