//! Item collection with score settlement and a per-level score threshold.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use super::engine::{f64_at, str_at, Entry, World};
use super::{BuildSpec, Fault};
use crate::injection::state::{format_number, number};
use crate::injection::{ActionStep, Event, RuntimeSchema, TypeTag};

/// Score needed per level: level `n` advances at `n * LEVEL_THRESHOLD`.
pub(crate) const LEVEL_THRESHOLD: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
struct Item {
    value: f64,
    parent: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Ledger {
    score: f64,
    level: f64,
    score_text: String,
    items: BTreeMap<String, Item>,
}

impl World for Ledger {
    fn initial() -> Self {
        let item = |value| Item { value, parent: None };
        Ledger {
            score: 0.0,
            level: 1.0,
            score_text: "Score 0 | Lv 1".into(),
            items: BTreeMap::from([("gem".into(), item(50.0)), ("ruby".into(), item(30.0))]),
        }
    }

    fn schema() -> RuntimeSchema {
        RuntimeSchema {
            state_paths: BTreeMap::from([
                ("score".into(), TypeTag::Number),
                ("level".into(), TypeTag::Number),
                ("hud".into(), TypeTag::Map),
                ("hud.score_text".into(), TypeTag::String),
                ("entities".into(), TypeTag::Entities),
            ]),
            actions: BTreeMap::from([(
                "collect".into(),
                BTreeMap::from([("id".into(), TypeTag::String)]),
            )]),
            entity_types: BTreeMap::from([(
                "item".into(),
                BTreeMap::from([("value".into(), TypeTag::Number)]),
            )]),
            events: vec!["collect".into(), "level_up".into()],
        }
    }

    fn from_tree(tree: &Value) -> Option<Self> {
        let mut items = BTreeMap::new();
        for (id, record) in tree.get("entities")?.as_object()? {
            if str_at(record, "type")? != "item" {
                return None;
            }
            items.insert(
                id.clone(),
                Item {
                    value: f64_at(record, "value")?,
                    parent: record.get("parent").and_then(Value::as_str).map(str::to_string),
                },
            );
        }
        Some(Ledger {
            score: f64_at(tree, "score")?,
            level: f64_at(tree, "level")?,
            score_text: str_at(tree.get("hud")?, "score_text")?.to_string(),
            items,
        })
    }

    fn to_tree(&self) -> Value {
        let entities: Map<String, Value> = self
            .items
            .iter()
            .map(|(id, item)| {
                let mut record = Map::new();
                record.insert("type".into(), json!("item"));
                record.insert("value".into(), number(item.value));
                if let Some(parent) = &item.parent {
                    record.insert("parent".into(), json!(parent));
                }
                (id.clone(), Value::Object(record))
            })
            .collect();
        json!({
            "score": number(self.score),
            "level": number(self.level),
            "hud": {"score_text": self.score_text},
            "entities": entities,
        })
    }

    fn step(&mut self, step: &ActionStep, build: &BuildSpec, tick: u64) -> Entry {
        if step.action != "collect" {
            return Entry::rejected(format!("unknown action `{}`", step.action));
        }
        let Some(id) = step.params.get("id").and_then(Value::as_str) else {
            return Entry::rejected("missing item id".into());
        };
        let Some(item) = self.items.get(id) else {
            return Entry::rejected(format!("no item `{id}`"));
        };
        let value = item.value;
        let credits = if build.has(Fault::DoubleAdd) { 2 } else { 1 };
        for _ in 0..credits {
            self.score += value;
        }
        let mut events = vec![Event::new(tick, "collect")
            .with("id", json!(id))
            .with("value", number(value))];
        if !build.has(Fault::NoItemRemoval) {
            self.items.remove(id);
        }
        let threshold = self.level * LEVEL_THRESHOLD;
        let reached = if build.has(Fault::StrictThreshold) {
            self.score > threshold
        } else {
            self.score >= threshold
        };
        if reached {
            self.level += 1.0;
            events.push(Event::new(tick, "level_up").with("level", number(self.level)));
        }
        Entry::accepted(events)
    }

    fn refresh_hud(&mut self) {
        self.score_text = format!(
            "Score {} | Lv {}",
            format_number(self.score),
            format_number(self.level)
        );
    }

    fn contaminate(&mut self) {
        self.score += 1000.0;
    }
}
