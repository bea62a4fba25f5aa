//! Specifications, keypoints and verification units.
//!
//! A specification is a DAG of natural-language requirement elements. Each
//! keypoint is a Hoare-style triple (P, a, Q) attributed to exactly one
//! element, and each verification unit grounds a keypoint as a state patch,
//! a bounded interaction and an assertion.

mod check;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::injection::state::normalize;
use crate::injection::{ActionStep, StatePatchOp};

pub use check::{lint_unit, validate_keypoint, validate_suite};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Controls,
    Physics,
    Scoring,
    Rules,
    StateTransition,
    Ui,
    FailureCondition,
    Progression,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecElement {
    pub id: String,
    pub text: String,
    pub category: Category,
    #[serde(default)]
    pub depends_on: Vec<String>,
}

/// A validated specification: unique ids, resolved and acyclic dependencies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Specification {
    pub game_id: String,
    pub elements: Vec<SpecElement>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("specification has no elements")]
    Empty,
    #[error("element with empty id")]
    EmptyId,
    #[error("duplicate element id `{0}`")]
    DuplicateId(String),
    #[error("element `{element}` depends on unknown element `{missing}`")]
    DanglingRef { element: String, missing: String },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
}

#[derive(Deserialize)]
struct SpecFile {
    game_id: String,
    elements: Vec<SpecElement>,
}

impl Specification {
    pub fn new(game_id: impl Into<String>, elements: Vec<SpecElement>) -> Result<Self, SpecError> {
        if elements.is_empty() {
            return Err(SpecError::Empty);
        }
        let mut seen = BTreeSet::new();
        for e in &elements {
            if e.id.is_empty() {
                return Err(SpecError::EmptyId);
            }
            if !seen.insert(e.id.as_str()) {
                return Err(SpecError::DuplicateId(e.id.clone()));
            }
        }
        for e in &elements {
            if let Some(missing) = e.depends_on.iter().find(|d| !seen.contains(d.as_str())) {
                return Err(SpecError::DanglingRef {
                    element: e.id.clone(),
                    missing: missing.clone(),
                });
            }
        }
        let spec = Specification {
            game_id: game_id.into(),
            elements,
        };
        if let Some(cycle) = spec.find_cycle() {
            return Err(SpecError::Cycle(cycle));
        }
        Ok(spec)
    }

    fn index(&self) -> HashMap<&str, usize> {
        self.elements
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i))
            .collect()
    }

    /// Depth-first search for a back edge; the cycle is reported closed,
    /// e.g. `A -> B -> A`.
    fn find_cycle(&self) -> Option<Vec<String>> {
        let index = self.index();
        let mut state = vec![0u8; self.elements.len()];
        let mut stack: Vec<usize> = Vec::new();

        fn visit(
            spec: &Specification,
            index: &HashMap<&str, usize>,
            state: &mut [u8],
            stack: &mut Vec<usize>,
            node: usize,
        ) -> Option<Vec<String>> {
            state[node] = 1;
            stack.push(node);
            for dep in &spec.elements[node].depends_on {
                let next = index[dep.as_str()];
                match state[next] {
                    1 => {
                        let from = stack.iter().position(|n| *n == next).expect("on stack");
                        let mut cycle: Vec<String> = stack[from..]
                            .iter()
                            .map(|n| spec.elements[*n].id.clone())
                            .collect();
                        cycle.push(spec.elements[next].id.clone());
                        return Some(cycle);
                    }
                    0 => {
                        if let Some(c) = visit(spec, index, state, stack, next) {
                            return Some(c);
                        }
                    }
                    _ => {}
                }
            }
            stack.pop();
            state[node] = 2;
            None
        }

        (0..self.elements.len()).find_map(|n| {
            if state[n] == 0 {
                visit(self, &index, &mut state, &mut stack, n)
            } else {
                None
            }
        })
    }

    pub fn element(&self, id: &str) -> Option<&SpecElement> {
        self.elements.iter().find(|e| e.id == id)
    }

    /// Dependencies before dependents; ties keep file order.
    pub fn topological_order(&self) -> Vec<&str> {
        let index = self.index();
        let mut indegree: Vec<usize> = self.elements.iter().map(|e| e.depends_on.len()).collect();
        let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); self.elements.len()];
        for (i, e) in self.elements.iter().enumerate() {
            for d in &e.depends_on {
                dependents[index[d.as_str()]].push(i);
            }
        }
        let mut ready: VecDeque<usize> = (0..self.elements.len()).filter(|i| indegree[*i] == 0).collect();
        let mut order = Vec::with_capacity(self.elements.len());
        while let Some(i) = ready.pop_front() {
            order.push(self.elements[i].id.as_str());
            for &j in &dependents[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push_back(j);
                }
            }
        }
        order
    }

    /// Every element `id` transitively depends on, excluding itself.
    pub fn ancestors(&self, id: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut todo: Vec<&str> = vec![id];
        while let Some(cur) = todo.pop() {
            for d in self.element(cur).map(|e| e.depends_on.as_slice()).unwrap_or_default() {
                if out.insert(d.clone()) {
                    todo.push(d);
                }
            }
        }
        out
    }
}

/// Parses and validates a `*.spec.json` document.
pub fn load_specification(text: &str) -> Result<Specification, SpecError> {
    let file: SpecFile = serde_json::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
    Specification::new(file.game_id, file.elements)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keypoint {
    pub id: String,
    pub element_id: String,
    /// P
    pub precondition: String,
    /// a
    pub interaction: String,
    /// Q
    pub postcondition: String,
}

/// Per-unit execution limits. Also used as the run-wide policy that keypoint
/// validation checks interaction length against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub max_actions: u32,
    pub max_ticks: u32,
    pub timeout_ms: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_actions: 16,
            max_ticks: 600,
            timeout_ms: 60_000,
        }
    }
}

pub type BudgetPolicy = Budget;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    #[default]
    Programmatic,
    External,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationUnit {
    pub id: String,
    pub keypoint_id: String,
    /// Marks a unit that checks the launch state, so an empty patch is
    /// intentional.
    #[serde(default, skip_serializing_if = "is_default")]
    pub initial_state: bool,
    #[serde(default)]
    pub patch: Vec<StatePatchOp>,
    #[serde(default)]
    pub interaction: Vec<ActionStep>,
    pub expectation: String,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default, skip_serializing_if = "is_default")]
    pub judge: JudgeKind,
}

/// Hex digest of the unit's canonical form under a build. Sensitive to
/// every field of the unit and to the build id; insensitive to key order,
/// whitespace and `1` vs `1.0`.
pub fn canonical_hash(unit: &VerificationUnit, build_id: &str) -> String {
    let doc = serde_json::json!({ "build": build_id, "unit": unit });
    let canonical = serde_json::to_string(&normalize(&doc)).expect("unit serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Pass,
    Fail,
    /// An external judge abstained or stayed unavailable.
    Unverified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    BuildLaunchFailure,
    InjectionFailure,
    InteractionFailure,
    OutcomeMismatch,
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("reason serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitVerdict {
    pub kind: VerdictKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_reason: Option<FailReason>,
    pub attempts: u32,
    pub duration_ms: u64,
}

impl UnitVerdict {
    pub fn pass(attempts: u32, duration_ms: u64) -> Self {
        UnitVerdict {
            kind: VerdictKind::Pass,
            fail_reason: None,
            attempts,
            duration_ms,
        }
    }

    pub fn fail(reason: FailReason, attempts: u32, duration_ms: u64) -> Self {
        UnitVerdict {
            kind: VerdictKind::Fail,
            fail_reason: Some(reason),
            attempts,
            duration_ms,
        }
    }

    pub fn unverified(attempts: u32, duration_ms: u64) -> Self {
        UnitVerdict {
            kind: VerdictKind::Unverified,
            fail_reason: None,
            attempts,
            duration_ms,
        }
    }
}

impl fmt::Display for UnitVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.fail_reason) {
            (VerdictKind::Fail, Some(reason)) => write!(f, "fail({reason})"),
            (VerdictKind::Pass, _) => f.write_str("pass"),
            (VerdictKind::Fail, None) => f.write_str("fail"),
            (VerdictKind::Unverified, _) => f.write_str("unverified"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    /// Unit, keypoint or element id; file path for I/O problems.
    pub id: String,
    pub field: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub location: Location,
}

impl Diagnostic {
    pub fn error(code: &str, id: &str, field: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code: code.into(),
            message: message.into(),
            location: Location {
                id: id.into(),
                field: field.into(),
            },
        }
    }

    pub fn warning(code: &str, id: &str, field: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            ..Diagnostic::error(code, id, field, message)
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{sev}[{}] {}.{}: {}",
            self.code, self.location.id, self.location.field, self.message
        )
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {source}")]
    Spec { path: String, source: SpecError },
}

impl LoadError {
    /// Diagnostic code for operator-facing output.
    pub fn code(&self) -> &'static str {
        match self {
            LoadError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                "io-not-found"
            }
            LoadError::Io { .. } => "io-error",
            LoadError::Parse { .. } => "parse-error",
            LoadError::Spec { source, .. } => match source {
                SpecError::Parse(_) => "parse-error",
                SpecError::Cycle(_) => "cycle",
                SpecError::DanglingRef { .. } => "dangling-ref",
                SpecError::DuplicateId(_) => "duplicate-id",
                SpecError::Empty | SpecError::EmptyId => "empty",
            },
        }
    }

    pub fn path(&self) -> &str {
        match self {
            LoadError::Io { path, .. } | LoadError::Parse { path, .. } | LoadError::Spec { path, .. } => path,
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic::error(self.code(), self.path(), "file", self.to_string())
    }
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_list<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<Vec<T>, LoadError> {
    serde_json::from_str(text).map_err(|e| LoadError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// A specification with its keypoints and units, as loaded from files.
#[derive(Clone, Debug, PartialEq)]
pub struct Suite {
    pub spec: Specification,
    pub keypoints: Vec<Keypoint>,
    pub units: Vec<VerificationUnit>,
}

impl Suite {
    pub fn load(spec: &Path, keypoints: &Path, units: &Path) -> Result<Suite, LoadError> {
        let spec_text = read(spec)?;
        let kp_text = read(keypoints)?;
        let unit_text = read(units)?;
        Ok(Suite {
            spec: load_specification(&spec_text).map_err(|source| LoadError::Spec {
                path: spec.display().to_string(),
                source,
            })?,
            keypoints: parse_list(keypoints, &kp_text)?,
            units: parse_list(units, &unit_text)?,
        })
    }

    pub fn keypoint(&self, id: &str) -> Option<&Keypoint> {
        self.keypoints.iter().find(|k| k.id == id)
    }

    /// Units per keypoint id, in file order.
    pub fn units_by_keypoint(&self) -> BTreeMap<&str, Vec<&VerificationUnit>> {
        let mut out: BTreeMap<&str, Vec<&VerificationUnit>> = BTreeMap::new();
        for u in &self.units {
            out.entry(u.keypoint_id.as_str()).or_default().push(u);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn el(id: &str, deps: &[&str]) -> SpecElement {
        SpecElement {
            id: id.into(),
            text: format!("{id} holds"),
            category: Category::Other,
            depends_on: deps.iter().map(|d| d.to_string()).collect(),
        }
    }

    #[test]
    fn minimal_dag() {
        let spec = Specification::new("g", vec![el("A", &[]), el("B", &["A"])]).unwrap();
        assert_eq!(spec.topological_order(), ["A", "B"]);
        assert_eq!(spec.ancestors("B"), BTreeSet::from(["A".to_string()]));
    }

    #[test]
    fn two_cycle_is_named() {
        let err = Specification::new("g", vec![el("A", &["B"]), el("B", &["A"])]).unwrap_err();
        assert_eq!(err, SpecError::Cycle(vec!["A".into(), "B".into(), "A".into()]));
        assert_eq!(err.to_string(), "dependency cycle: A -> B -> A");
        let self_loop = Specification::new("g", vec![el("A", &["A"])]).unwrap_err();
        assert_eq!(self_loop.to_string(), "dependency cycle: A -> A");
    }

    #[test]
    fn structural_errors() {
        assert_eq!(Specification::new("g", vec![]).unwrap_err(), SpecError::Empty);
        assert!(matches!(
            Specification::new("g", vec![el("A", &["Z"])]),
            Err(SpecError::DanglingRef { .. })
        ));
        assert!(matches!(
            Specification::new("g", vec![el("A", &[]), el("A", &[])]),
            Err(SpecError::DuplicateId(_))
        ));
        assert!(matches!(load_specification("{"), Err(SpecError::Parse(_))));
    }

    #[test]
    fn categories_parse_snake_case() {
        let spec = load_specification(
            r#"{"game_id":"g","elements":[{"id":"a","text":"t","category":"failure_condition"}]}"#,
        )
        .unwrap();
        assert_eq!(spec.elements[0].category, Category::FailureCondition);
    }

    fn unit() -> VerificationUnit {
        VerificationUnit {
            id: "u1".into(),
            keypoint_id: "k1".into(),
            initial_state: false,
            patch: vec![StatePatchOp::set("player.hp", 25)],
            interaction: vec![ActionStep::new("move").param("dir", "right")],
            expectation: "eq(post.player.hp, 0)".into(),
            budget: Budget::default(),
            judge: JudgeKind::Programmatic,
        }
    }

    #[test]
    fn hash_contract() {
        let u = unit();
        let h = canonical_hash(&u, "b1");
        assert_eq!(h.len(), 16);
        assert_eq!(h, canonical_hash(&u.clone(), "b1"));
        assert_ne!(h, canonical_hash(&u, "b2"));
        let mut changed = u.clone();
        changed.patch = vec![StatePatchOp::set("player.hp", 26)];
        assert_ne!(h, canonical_hash(&changed, "b1"));
        let mut float = u.clone();
        float.patch = vec![StatePatchOp::set("player.hp", json!(25.0))];
        assert_eq!(h, canonical_hash(&float, "b1"));
    }

    #[test]
    fn unit_defaults() {
        let u: VerificationUnit =
            serde_json::from_str(r#"{"id":"u","keypoint_id":"k","expectation":"event(\"x\")"}"#).unwrap();
        assert_eq!(u.budget, Budget::default());
        assert_eq!(u.judge, JudgeKind::Programmatic);
        assert!(u.patch.is_empty() && !u.initial_state);
    }
}
