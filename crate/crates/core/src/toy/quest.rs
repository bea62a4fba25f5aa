//! Boss fight gated on a quest flag; defeating the boss completes the quest.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use super::engine::{f64_at, str_at, Entry, World};
use super::{BuildSpec, Fault};
use crate::injection::state::number;
use crate::injection::{ActionStep, Event, RuntimeSchema, TypeTag};

#[derive(Clone, Debug, PartialEq)]
struct Boss {
    hp: f64,
    parent: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Quest {
    boss_phase: bool,
    quest_complete: bool,
    attack: f64,
    quest_text: String,
    bosses: BTreeMap<String, Boss>,
}

fn bool_at(v: &Value, key: &str) -> Option<bool> {
    v.get(key)?.as_bool()
}

impl World for Quest {
    fn initial() -> Self {
        Quest {
            boss_phase: false,
            quest_complete: false,
            attack: 25.0,
            quest_text: "Find the boss".into(),
            bosses: BTreeMap::from([(
                "boss".into(),
                Boss {
                    hp: 50.0,
                    parent: None,
                },
            )]),
        }
    }

    fn schema() -> RuntimeSchema {
        RuntimeSchema {
            state_paths: BTreeMap::from([
                ("flags".into(), TypeTag::Map),
                ("flags.boss_phase".into(), TypeTag::Bool),
                ("flags.quest_complete".into(), TypeTag::Bool),
                ("player".into(), TypeTag::Map),
                ("player.attack".into(), TypeTag::Number),
                ("hud".into(), TypeTag::Map),
                ("hud.quest_text".into(), TypeTag::String),
                ("entities".into(), TypeTag::Entities),
            ]),
            actions: BTreeMap::from([(
                "defeat".into(),
                BTreeMap::from([("target".into(), TypeTag::String)]),
            )]),
            entity_types: BTreeMap::from([(
                "boss".into(),
                BTreeMap::from([("hp".into(), TypeTag::Number)]),
            )]),
            events: vec!["hit".into(), "quest_complete".into()],
        }
    }

    fn from_tree(tree: &Value) -> Option<Self> {
        let mut bosses = BTreeMap::new();
        for (id, record) in tree.get("entities")?.as_object()? {
            if str_at(record, "type")? != "boss" {
                return None;
            }
            bosses.insert(
                id.clone(),
                Boss {
                    hp: f64_at(record, "hp")?,
                    parent: record.get("parent").and_then(Value::as_str).map(str::to_string),
                },
            );
        }
        let flags = tree.get("flags")?;
        Some(Quest {
            boss_phase: bool_at(flags, "boss_phase")?,
            quest_complete: bool_at(flags, "quest_complete")?,
            attack: f64_at(tree.get("player")?, "attack")?,
            quest_text: str_at(tree.get("hud")?, "quest_text")?.to_string(),
            bosses,
        })
    }

    fn to_tree(&self) -> Value {
        let entities: Map<String, Value> = self
            .bosses
            .iter()
            .map(|(id, boss)| {
                let mut record = Map::new();
                record.insert("type".into(), json!("boss"));
                record.insert("hp".into(), number(boss.hp));
                if let Some(parent) = &boss.parent {
                    record.insert("parent".into(), json!(parent));
                }
                (id.clone(), Value::Object(record))
            })
            .collect();
        json!({
            "flags": {"boss_phase": self.boss_phase, "quest_complete": self.quest_complete},
            "player": {"attack": number(self.attack)},
            "hud": {"quest_text": self.quest_text},
            "entities": entities,
        })
    }

    fn step(&mut self, step: &ActionStep, build: &BuildSpec, tick: u64) -> Entry {
        if step.action != "defeat" {
            return Entry::rejected(format!("unknown action `{}`", step.action));
        }
        let Some(target) = step.params.get("target").and_then(Value::as_str) else {
            return Entry::rejected("missing target".into());
        };
        let gate_open = self.boss_phase || build.has(Fault::GateIgnored);
        let attack = self.attack;
        let Some(boss) = self.bosses.get_mut(target) else {
            return Entry::rejected(format!("no boss `{target}`"));
        };
        if boss.hp <= 0.0 {
            return Entry::rejected(format!("`{target}` already defeated"));
        }
        if !gate_open {
            return Entry::rejected("boss phase not reached".into());
        }
        boss.hp = (boss.hp - attack).max(0.0);
        let mut events = vec![Event::new(tick, "hit")
            .with("target", json!(target))
            .with("damage", number(attack))];
        if boss.hp <= 0.0 {
            if !build.has(Fault::FlagNotSet) {
                self.quest_complete = true;
            }
            events.push(Event::new(tick, "quest_complete").with("target", json!(target)));
        }
        Entry::accepted(events)
    }

    fn refresh_hud(&mut self) {
        self.quest_text = if self.quest_complete {
            "Quest complete"
        } else if self.boss_phase {
            "Defeat the boss"
        } else {
            "Find the boss"
        }
        .into();
    }

    fn contaminate(&mut self) {
        for boss in self.bosses.values_mut() {
            boss.hp = 0.0;
        }
    }
}
