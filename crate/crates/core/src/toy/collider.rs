//! 10x10 grid with obstacles and coins. Entering an obstacle cell costs HP;
//! HP at zero ends the game.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use super::engine::{f64_at, str_at, Entry, World};
use super::{BuildSpec, Fault};
use crate::injection::state::{format_number, number};
use crate::injection::{ActionStep, Event, RuntimeSchema, TypeTag};

pub(crate) const GRID: i64 = 10;
pub(crate) const COLLISION_DAMAGE: f64 = 25.0;
pub(crate) const WEAK_DAMAGE: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Obstacle,
    Coin { value: f64 },
}

#[derive(Clone, Debug, PartialEq)]
struct Entity {
    kind: Kind,
    pos: [i64; 2],
    parent: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Collider {
    pos: [i64; 2],
    hp: f64,
    name: String,
    phase: String,
    score: f64,
    hp_text: String,
    banner: String,
    entities: BTreeMap<String, Entity>,
}

fn cell(v: Option<&Value>) -> Option<[i64; 2]> {
    let xs = v?.as_array()?;
    match xs.as_slice() {
        [x, y] => Some([x.as_i64()?, y.as_i64()?]),
        _ => None,
    }
}

impl Collider {
    fn game_over(&self) -> bool {
        self.phase == "game_over"
    }
}

impl World for Collider {
    fn initial() -> Self {
        Collider {
            pos: [0, 0],
            hp: 100.0,
            name: "player".into(),
            phase: "playing".into(),
            score: 0.0,
            hp_text: "HP 100".into(),
            banner: String::new(),
            entities: BTreeMap::new(),
        }
    }

    fn schema() -> RuntimeSchema {
        use TypeTag::*;
        RuntimeSchema {
            state_paths: BTreeMap::from([
                ("player".into(), Map),
                ("player.pos".into(), Cell),
                ("player.hp".into(), Number),
                ("player.name".into(), String),
                ("phase".into(), String),
                ("score".into(), Number),
                ("hud".into(), Map),
                ("hud.hp_text".into(), String),
                ("hud.banner".into(), String),
                ("entities".into(), Entities),
            ]),
            actions: BTreeMap::from([("move".into(), BTreeMap::from([("dir".into(), String)]))]),
            entity_types: BTreeMap::from([
                ("obstacle".into(), BTreeMap::from([("pos".into(), Cell)])),
                (
                    "coin".into(),
                    BTreeMap::from([("pos".into(), Cell), ("value".into(), Number)]),
                ),
            ]),
            events: vec!["coin".into(), "collision".into(), "game_over".into()],
        }
    }

    fn from_tree(tree: &Value) -> Option<Self> {
        let mut entities = BTreeMap::new();
        for (id, record) in tree.get("entities")?.as_object()? {
            let kind = match str_at(record, "type")? {
                "obstacle" => Kind::Obstacle,
                "coin" => Kind::Coin {
                    value: f64_at(record, "value")?,
                },
                _ => return None,
            };
            let parent = record.get("parent").and_then(Value::as_str).map(str::to_string);
            entities.insert(
                id.clone(),
                Entity {
                    kind,
                    pos: cell(record.get("pos"))?,
                    parent,
                },
            );
        }
        let player = tree.get("player")?;
        Some(Collider {
            pos: cell(player.get("pos"))?,
            hp: f64_at(player, "hp")?,
            name: str_at(player, "name")?.to_string(),
            phase: str_at(tree, "phase")?.to_string(),
            score: f64_at(tree, "score")?,
            hp_text: str_at(tree.get("hud")?, "hp_text")?.to_string(),
            banner: str_at(tree.get("hud")?, "banner")?.to_string(),
            entities,
        })
    }

    fn to_tree(&self) -> Value {
        let entities: Map<String, Value> = self
            .entities
            .iter()
            .map(|(id, e)| {
                let mut record = Map::new();
                record.insert("pos".into(), json!(e.pos));
                match e.kind {
                    Kind::Obstacle => {
                        record.insert("type".into(), json!("obstacle"));
                    }
                    Kind::Coin { value } => {
                        record.insert("type".into(), json!("coin"));
                        record.insert("value".into(), number(value));
                    }
                }
                if let Some(parent) = &e.parent {
                    record.insert("parent".into(), json!(parent));
                }
                (id.clone(), Value::Object(record))
            })
            .collect();
        json!({
            "player": {"pos": self.pos, "hp": number(self.hp), "name": self.name},
            "phase": self.phase,
            "score": number(self.score),
            "hud": {"hp_text": self.hp_text, "banner": self.banner},
            "entities": entities,
        })
    }

    fn step(&mut self, step: &ActionStep, build: &BuildSpec, tick: u64) -> Entry {
        if step.action != "move" {
            return Entry::rejected(format!("unknown action `{}`", step.action));
        }
        let delta = match step.params.get("dir").and_then(Value::as_str) {
            Some("up") => [0, -1],
            Some("down") => [0, 1],
            Some("left") => [-1, 0],
            Some("right") => [1, 0],
            other => return Entry::rejected(format!("bad direction {other:?}")),
        };
        if self.game_over() {
            return Entry::rejected("game is over".into());
        }
        let target = [self.pos[0] + delta[0], self.pos[1] + delta[1]];
        if !target.iter().all(|c| (0..GRID).contains(c)) {
            return Entry::rejected("blocked by grid edge".into());
        }
        self.pos = target;
        let mut events = Vec::new();
        let mut collected = Vec::new();
        for (id, entity) in &self.entities {
            if entity.pos != target {
                continue;
            }
            match entity.kind {
                Kind::Obstacle => {
                    let damage = if build.has(Fault::NoHpDecrement) {
                        0.0
                    } else if build.has(Fault::WeakDecrement) {
                        WEAK_DAMAGE
                    } else {
                        COLLISION_DAMAGE
                    };
                    self.hp = (self.hp - damage).max(0.0);
                    events.push(Event::new(tick, "collision").with("id", json!(id)));
                }
                Kind::Coin { value } => {
                    self.score += value;
                    collected.push(id.clone());
                    events.push(
                        Event::new(tick, "coin")
                            .with("id", json!(id))
                            .with("value", number(value)),
                    );
                }
            }
        }
        for id in collected {
            self.entities.remove(&id);
        }
        if self.hp <= 0.0 && !self.game_over() && !build.has(Fault::NoGameOver) {
            self.phase = "game_over".into();
            events.push(Event::new(tick, "game_over"));
        }
        Entry::accepted(events)
    }

    fn refresh_hud(&mut self) {
        self.hp_text = format!("HP {}", format_number(self.hp));
        self.banner = if self.game_over() { "GAME OVER".into() } else { String::new() };
    }

    fn contaminate(&mut self) {
        self.phase = "game_over".into();
    }
}
