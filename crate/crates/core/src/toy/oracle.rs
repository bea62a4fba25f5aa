//! Reference semantics for the toy templates.
//!
//! State is a flat map from canonical leaf path (`player.pos.0`) to scalar.
//! Nothing here calls into the engine or the generic patcher: the tables,
//! the patch rules and the transition rules are all restated, so that
//! agreement between the two is evidence rather than tautology.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};
use thiserror::Error;

use super::{BuildSpec, Fault, Template};
use crate::injection::{ActionStep, Event, PatchErrorKind, Snapshot, StatePatchOp};

#[derive(Clone, Debug, PartialEq)]
enum Leaf {
    Num(f64),
    Bool(bool),
    Str(String),
}

type Flat = BTreeMap<String, Leaf>;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    Map,
    Cell,
    Entities,
    Record,
    Fixed,
    Num,
    Bool,
    Str,
    Coord,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("patch op {index} rejected: {kind}")]
    Patch { index: usize, kind: PatchErrorKind },
    #[error("step {index} advances zero ticks")]
    ZeroTicks { index: usize },
}

/// Final state, events and per-step acceptance of a simulated unit.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleRun {
    pub snapshot: Snapshot,
    pub events: Vec<Event>,
    pub accepted: Vec<bool>,
}

fn static_kinds(template: Template) -> &'static [(&'static str, Kind)] {
    match template {
        Template::Collider => &[
            ("player", Kind::Map),
            ("player.pos", Kind::Cell),
            ("player.hp", Kind::Num),
            ("player.name", Kind::Str),
            ("phase", Kind::Str),
            ("score", Kind::Num),
            ("hud", Kind::Map),
            ("hud.hp_text", Kind::Str),
            ("hud.banner", Kind::Str),
            ("entities", Kind::Entities),
        ],
        Template::Ledger => &[
            ("score", Kind::Num),
            ("level", Kind::Num),
            ("hud", Kind::Map),
            ("hud.score_text", Kind::Str),
            ("entities", Kind::Entities),
        ],
        Template::Quest => &[
            ("flags", Kind::Map),
            ("flags.boss_phase", Kind::Bool),
            ("flags.quest_complete", Kind::Bool),
            ("player", Kind::Map),
            ("player.attack", Kind::Num),
            ("hud", Kind::Map),
            ("hud.quest_text", Kind::Str),
            ("entities", Kind::Entities),
        ],
    }
}

fn entity_props(template: Template, entity_type: &str) -> Option<&'static [(&'static str, Kind)]> {
    match (template, entity_type) {
        (Template::Collider, "obstacle") => Some(&[("pos", Kind::Cell)]),
        (Template::Collider, "coin") => Some(&[("pos", Kind::Cell), ("value", Kind::Num)]),
        (Template::Ledger, "item") => Some(&[("value", Kind::Num)]),
        (Template::Quest, "boss") => Some(&[("hp", Kind::Num)]),
        _ => None,
    }
}

fn initial(template: Template) -> Flat {
    let n = |x: f64| Leaf::Num(x);
    let s = |x: &str| Leaf::Str(x.to_string());
    let entries: Vec<(&str, Leaf)> = match template {
        Template::Collider => vec![
            ("player.pos.0", n(0.0)),
            ("player.pos.1", n(0.0)),
            ("player.hp", n(100.0)),
            ("player.name", s("player")),
            ("phase", s("playing")),
            ("score", n(0.0)),
            ("hud.hp_text", s("HP 100")),
            ("hud.banner", s("")),
        ],
        Template::Ledger => vec![
            ("score", n(0.0)),
            ("level", n(1.0)),
            ("hud.score_text", s("Score 0 | Lv 1")),
            ("entities.gem.type", s("item")),
            ("entities.gem.value", n(50.0)),
            ("entities.ruby.type", s("item")),
            ("entities.ruby.value", n(30.0)),
        ],
        Template::Quest => vec![
            ("flags.boss_phase", Leaf::Bool(false)),
            ("flags.quest_complete", Leaf::Bool(false)),
            ("player.attack", n(25.0)),
            ("hud.quest_text", s("Find the boss")),
            ("entities.boss.type", s("boss")),
            ("entities.boss.hp", n(50.0)),
        ],
    };
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

struct Sim<'a> {
    build: &'a BuildSpec,
    flat: Flat,
}

impl Sim<'_> {
    fn template(&self) -> Template {
        self.build.template
    }

    fn entity_type(&self, id: &str) -> Option<&str> {
        match self.flat.get(&format!("entities.{id}.type")) {
            Some(Leaf::Str(t)) => Some(t.as_str()),
            _ => None,
        }
    }

    fn entity_ids(&self) -> BTreeSet<String> {
        self.flat
            .keys()
            .filter_map(|k| k.strip_prefix("entities.")?.strip_suffix(".type"))
            .filter(|id| !id.contains('.'))
            .map(str::to_string)
            .collect()
    }

    fn prop_kind(&self, id: &str, prop: &str) -> Option<Kind> {
        let ty = self.entity_type(id)?;
        entity_props(self.template(), ty)?
            .iter()
            .find(|(p, _)| *p == prop)
            .map(|(_, k)| *k)
    }

    fn kind_of(&self, path: &str) -> Option<Kind> {
        let segs: Vec<&str> = path.split('.').collect();
        if segs.iter().any(|s| s.is_empty()) {
            return None;
        }
        let statics = static_kinds(self.template());
        if let Some((_, k)) = statics.iter().find(|(p, _)| *p == path) {
            return Some(*k);
        }
        let coord = |s: &str| s == "0" || s == "1";
        match segs.as_slice() {
            ["entities", id] => self.entity_type(id).map(|_| Kind::Record),
            ["entities", id, "type" | "parent"] => self.entity_type(id).map(|_| Kind::Fixed),
            ["entities", id, prop] => self.prop_kind(id, prop),
            ["entities", id, prop, i] if coord(i) => {
                (self.prop_kind(id, prop) == Some(Kind::Cell)).then_some(Kind::Coord)
            }
            [head @ .., i] if coord(i) => {
                let parent = head.join(".");
                statics
                    .iter()
                    .any(|(p, k)| *p == parent && *k == Kind::Cell)
                    .then_some(Kind::Coord)
            }
            _ => None,
        }
    }

    fn set(&mut self, path: &str, value: &Value) -> Result<(), PatchErrorKind> {
        if path.is_empty() {
            return Err(PatchErrorKind::EmptyPath);
        }
        let kind = self.kind_of(path).ok_or(PatchErrorKind::UnknownPath)?;
        match kind {
            Kind::Fixed => Err(PatchErrorKind::ReadOnly),
            Kind::Entities => Err(PatchErrorKind::TypeMismatch),
            Kind::Map | Kind::Record => {
                let fields = value.as_object().ok_or(PatchErrorKind::TypeMismatch)?;
                for (key, child) in fields {
                    if key.is_empty() || key.contains('.') {
                        return Err(PatchErrorKind::UnknownPath);
                    }
                    self.set(&format!("{path}.{key}"), child)?;
                }
                Ok(())
            }
            Kind::Cell => {
                let leaves = cell_leaves(value).ok_or(PatchErrorKind::TypeMismatch)?;
                self.flat.insert(format!("{path}.0"), leaves[0].clone());
                self.flat.insert(format!("{path}.1"), leaves[1].clone());
                Ok(())
            }
            scalar => {
                let leaf = leaf_of(scalar, value).ok_or(PatchErrorKind::TypeMismatch)?;
                self.flat.insert(path.to_string(), leaf);
                Ok(())
            }
        }
    }

    fn spawn(
        &mut self,
        entity_type: &str,
        id: &str,
        props: &BTreeMap<String, Value>,
        parent: Option<&str>,
    ) -> Result<(), PatchErrorKind> {
        if id.is_empty() || id.contains('.') {
            return Err(PatchErrorKind::InvalidId);
        }
        let signature =
            entity_props(self.template(), entity_type).ok_or(PatchErrorKind::UnknownEntityType)?;
        if self.entity_type(id).is_some() {
            return Err(PatchErrorKind::DuplicateEntityId);
        }
        if parent.is_some_and(|p| self.entity_type(p).is_none()) {
            return Err(PatchErrorKind::UnknownEntity);
        }
        let mut additions = Flat::new();
        for (prop, value) in props {
            if prop == "type" || prop == "parent" {
                return Err(PatchErrorKind::ReadOnly);
            }
            let (_, kind) = signature
                .iter()
                .find(|(p, _)| p == prop)
                .ok_or(PatchErrorKind::UnknownPath)?;
            let base = format!("entities.{id}.{prop}");
            if *kind == Kind::Cell {
                let leaves = cell_leaves(value).ok_or(PatchErrorKind::TypeMismatch)?;
                additions.insert(format!("{base}.0"), leaves[0].clone());
                additions.insert(format!("{base}.1"), leaves[1].clone());
            } else {
                additions.insert(base, leaf_of(*kind, value).ok_or(PatchErrorKind::TypeMismatch)?);
            }
        }
        if signature.iter().any(|(p, _)| !props.contains_key(*p)) {
            return Err(PatchErrorKind::MissingProp);
        }
        additions.insert(format!("entities.{id}.type"), Leaf::Str(entity_type.to_string()));
        if let Some(parent) = parent {
            additions.insert(format!("entities.{id}.parent"), Leaf::Str(parent.to_string()));
        }
        self.flat.extend(additions);
        Ok(())
    }

    fn remove(&mut self, id: &str) -> Result<(), PatchErrorKind> {
        if self.entity_type(id).is_none() {
            return Err(PatchErrorKind::UnknownEntity);
        }
        let prefix = format!("entities.{id}.");
        self.flat.retain(|k, _| !k.starts_with(&prefix));
        Ok(())
    }

    fn num(&self, key: &str) -> f64 {
        match self.flat.get(key) {
            Some(Leaf::Num(x)) => *x,
            _ => f64::NAN,
        }
    }

    fn text(&self, key: &str) -> &str {
        match self.flat.get(key) {
            Some(Leaf::Str(s)) => s,
            _ => "",
        }
    }

    fn flag(&self, key: &str) -> bool {
        matches!(self.flat.get(key), Some(Leaf::Bool(true)))
    }

    fn put_num(&mut self, key: &str, x: f64) {
        self.flat.insert(key.to_string(), Leaf::Num(x));
    }

    fn put_str(&mut self, key: &str, s: &str) {
        self.flat.insert(key.to_string(), Leaf::Str(s.to_string()));
    }

    /// Returns whether the step was accepted; pushes its events.
    fn step(&mut self, step: &ActionStep, tick: u64, events: &mut Vec<Event>) -> bool {
        let accepted = match self.template() {
            Template::Collider => self.collider_step(step, tick, events),
            Template::Ledger => self.ledger_step(step, tick, events),
            Template::Quest => self.quest_step(step, tick, events),
        };
        self.redraw_hud();
        accepted
    }

    fn collider_step(&mut self, step: &ActionStep, tick: u64, events: &mut Vec<Event>) -> bool {
        if step.action != "move" {
            return false;
        }
        let (dx, dy) = match step.params.get("dir").and_then(Value::as_str) {
            Some("right") => (1.0, 0.0),
            Some("left") => (-1.0, 0.0),
            Some("down") => (0.0, 1.0),
            Some("up") => (0.0, -1.0),
            _ => return false,
        };
        if self.text("phase") == "game_over" {
            return false;
        }
        let x = self.num("player.pos.0") + dx;
        let y = self.num("player.pos.1") + dy;
        if !(0.0..10.0).contains(&x) || !(0.0..10.0).contains(&y) {
            return false;
        }
        self.put_num("player.pos.0", x);
        self.put_num("player.pos.1", y);
        for id in self.entity_ids() {
            let base = format!("entities.{id}");
            if self.num(&format!("{base}.pos.0")) != x || self.num(&format!("{base}.pos.1")) != y {
                continue;
            }
            if self.entity_type(&id) == Some("obstacle") {
                let damage = match (
                    self.build.has(Fault::NoHpDecrement),
                    self.build.has(Fault::WeakDecrement),
                ) {
                    (true, _) => 0.0,
                    (false, true) => 10.0,
                    (false, false) => 25.0,
                };
                let hp = self.num("player.hp") - damage;
                self.put_num("player.hp", if hp < 0.0 { 0.0 } else { hp });
                events.push(Event::new(tick, "collision").with("id", Value::from(id.as_str())));
            } else {
                let value = self.num(&format!("{base}.value"));
                let score = self.num("score") + value;
                self.put_num("score", score);
                events.push(
                    Event::new(tick, "coin")
                        .with("id", Value::from(id.as_str()))
                        .with("value", json_number(value)),
                );
                self.remove(&id).expect("coin present");
            }
        }
        if self.num("player.hp") <= 0.0
            && self.text("phase") != "game_over"
            && !self.build.has(Fault::NoGameOver)
        {
            self.put_str("phase", "game_over");
            events.push(Event::new(tick, "game_over"));
        }
        true
    }

    fn ledger_step(&mut self, step: &ActionStep, tick: u64, events: &mut Vec<Event>) -> bool {
        if step.action != "collect" {
            return false;
        }
        let Some(id) = step.params.get("id").and_then(Value::as_str) else {
            return false;
        };
        if self.entity_type(id) != Some("item") {
            return false;
        }
        let value = self.num(&format!("entities.{id}.value"));
        let mut score = self.num("score") + value;
        if self.build.has(Fault::DoubleAdd) {
            score += value;
        }
        self.put_num("score", score);
        events.push(
            Event::new(tick, "collect")
                .with("id", Value::from(id))
                .with("value", json_number(value)),
        );
        if !self.build.has(Fault::NoItemRemoval) {
            self.remove(id).expect("item present");
        }
        let level = self.num("level");
        let bar = 100.0 * level;
        let strict = self.build.has(Fault::StrictThreshold);
        if (strict && score > bar) || (!strict && score >= bar) {
            self.put_num("level", level + 1.0);
            events.push(Event::new(tick, "level_up").with("level", json_number(level + 1.0)));
        }
        true
    }

    fn quest_step(&mut self, step: &ActionStep, tick: u64, events: &mut Vec<Event>) -> bool {
        if step.action != "defeat" {
            return false;
        }
        let Some(target) = step.params.get("target").and_then(Value::as_str) else {
            return false;
        };
        if self.entity_type(target) != Some("boss") {
            return false;
        }
        let hp_key = format!("entities.{target}.hp");
        let hp = self.num(&hp_key);
        if hp <= 0.0 {
            return false;
        }
        if !self.flag("flags.boss_phase") && !self.build.has(Fault::GateIgnored) {
            return false;
        }
        let attack = self.num("player.attack");
        let left = hp - attack;
        let left = if left < 0.0 { 0.0 } else { left };
        self.put_num(&hp_key, left);
        events.push(
            Event::new(tick, "hit")
                .with("target", Value::from(target))
                .with("damage", json_number(attack)),
        );
        if left <= 0.0 {
            if !self.build.has(Fault::FlagNotSet) {
                self.flat.insert("flags.quest_complete".into(), Leaf::Bool(true));
            }
            events.push(Event::new(tick, "quest_complete").with("target", Value::from(target)));
        }
        true
    }

    fn redraw_hud(&mut self) {
        match self.template() {
            Template::Collider => {
                let text = format!("HP {}", show(self.num("player.hp")));
                self.put_str("hud.hp_text", &text);
                let over = self.text("phase") == "game_over";
                self.put_str("hud.banner", if over { "GAME OVER" } else { "" });
            }
            Template::Ledger => {
                let text = format!("Score {} | Lv {}", show(self.num("score")), show(self.num("level")));
                self.put_str("hud.score_text", &text);
            }
            Template::Quest => {
                let text = match (self.flag("flags.quest_complete"), self.flag("flags.boss_phase")) {
                    (true, _) => "Quest complete",
                    (false, true) => "Defeat the boss",
                    (false, false) => "Find the boss",
                };
                self.put_str("hud.quest_text", text);
            }
        }
    }

    fn is_cell(&self, path: &str) -> bool {
        static_kinds(self.template())
            .iter()
            .any(|(p, k)| *p == path && *k == Kind::Cell)
            || matches!(path.split('.').collect::<Vec<_>>().as_slice(), ["entities", _, "pos"])
    }

    fn tree(&self) -> Value {
        let mut root = Map::new();
        root.insert("entities".into(), Value::Object(Map::new()));
        for (path, leaf) in &self.flat {
            let value = match leaf {
                Leaf::Num(x) => json_number(*x),
                Leaf::Bool(b) => Value::Bool(*b),
                Leaf::Str(s) => Value::String(s.clone()),
            };
            let segs: Vec<&str> = path.split('.').collect();
            let mut node = &mut root;
            for seg in &segs[..segs.len() - 1] {
                node = node
                    .entry(seg.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("interior node");
            }
            node.insert(segs[segs.len() - 1].to_string(), value);
        }
        self.cells_to_lists(String::new(), Value::Object(root))
    }

    fn cells_to_lists(&self, path: String, value: Value) -> Value {
        match value {
            Value::Object(map) if !path.is_empty() && self.is_cell(&path) => {
                Value::Array(vec![map["0"].clone(), map["1"].clone()])
            }
            Value::Object(map) => Value::Object(
                map.into_iter()
                    .map(|(k, v)| {
                        let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                        (k, self.cells_to_lists(child, v))
                    })
                    .collect(),
            ),
            other => other,
        }
    }
}

fn json_number(x: f64) -> Value {
    if x == x.trunc() && x.abs() < 9.007_199_254_740_992e15 {
        Value::from(x as i64)
    } else {
        Value::from(x)
    }
}

fn show(x: f64) -> String {
    if x == x.trunc() && x.abs() < 9.007_199_254_740_992e15 {
        (x as i64).to_string()
    } else {
        x.to_string()
    }
}

fn coord_leaf(v: &Value) -> Option<Leaf> {
    let x = v.as_f64()?;
    (x == x.trunc() && (0.0..=9.0).contains(&x)).then_some(Leaf::Num(x))
}

fn cell_leaves(value: &Value) -> Option<[Leaf; 2]> {
    match value.as_array()?.as_slice() {
        [a, b] => Some([coord_leaf(a)?, coord_leaf(b)?]),
        _ => None,
    }
}

fn leaf_of(kind: Kind, value: &Value) -> Option<Leaf> {
    match kind {
        Kind::Num => value.as_f64().filter(|x| x.is_finite()).map(Leaf::Num),
        Kind::Coord => coord_leaf(value),
        Kind::Bool => value.as_bool().map(Leaf::Bool),
        Kind::Str => value.as_str().map(|s| Leaf::Str(s.to_string())),
        _ => None,
    }
}

/// Runs `patch` then `steps` against a fresh instance of `build`.
///
/// Patch errors name the first failing op and discard the whole patch, like
/// the runtime's all-or-nothing rule.
pub fn oracle_simulate(
    build: &BuildSpec,
    patch: &[StatePatchOp],
    steps: &[ActionStep],
) -> Result<OracleRun, OracleError> {
    if let Some(index) = steps.iter().position(|s| s.ticks == 0) {
        return Err(OracleError::ZeroTicks { index });
    }
    let mut sim = Sim {
        build,
        flat: initial(build.template),
    };
    for (index, op) in patch.iter().enumerate() {
        let result = match op {
            StatePatchOp::Set { path, value } => sim.set(path, value),
            StatePatchOp::Spawn {
                entity_type,
                id,
                props,
                parent,
            } => sim.spawn(entity_type, id, props, parent.as_deref()),
            StatePatchOp::Remove { id } => sim.remove(id),
        };
        result.map_err(|kind| OracleError::Patch { index, kind })?;
    }
    let mut tick = 0u64;
    let mut events = Vec::new();
    let mut accepted = Vec::new();
    for step in steps {
        accepted.push(sim.step(step, tick + 1, &mut events));
        tick += u64::from(step.ticks);
    }
    Ok(OracleRun {
        snapshot: Snapshot {
            tick,
            state: sim.tree(),
        },
        events,
        accepted,
    })
}
