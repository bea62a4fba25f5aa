//! Random patches and interactions for the toy templates, covering both
//! valid and invalid inputs.

use std::collections::BTreeMap;

use ggv::injection::{ActionStep, StatePatchOp};
use ggv::toy::{BuildSpec, Template};
use proptest::prelude::*;
use serde_json::{json, Value};

fn paths(t: Template) -> &'static [&'static str] {
    match t {
        Template::Collider => &[
            "player.pos",
            "player.hp",
            "player.hp",
            "player.name",
            "phase",
            "phase",
            "score",
            "hud.hp_text",
            "hud.banner",
            "player",
            "hud",
            "entities",
            "player.pos.0",
            "player.mana",
            "entities.rock.pos",
            "entities.rock.type",
            "entities.gold.value",
            "",
        ],
        Template::Ledger => &[
            "score",
            "score",
            "level",
            "level",
            "hud.score_text",
            "hud",
            "entities.gem.value",
            "entities.ruby.value",
            "entities.gem.type",
            "entities.gem.parent",
            "entities.coin.value",
            "level.x",
            "entities",
        ],
        Template::Quest => &[
            "flags.boss_phase",
            "flags.boss_phase",
            "flags.quest_complete",
            "player.attack",
            "hud.quest_text",
            "entities.boss.hp",
            "entities.boss.hp",
            "entities.boss.type",
            "flags",
            "player",
            "entities.warden.hp",
        ],
    }
}

fn entity_types(t: Template) -> &'static [&'static str] {
    match t {
        Template::Collider => &["obstacle", "coin", "coin", "dragon"],
        Template::Ledger => &["item", "item", "dragon"],
        Template::Quest => &["boss", "boss", "dragon"],
    }
}

pub fn value() -> impl Strategy<Value = Value> {
    prop_oneof![
        4 => (-5i64..130).prop_map(|n| json!(n)),
        1 => (0i64..400).prop_map(|n| json!(n as f64 / 4.0)),
        2 => any::<bool>().prop_map(|b| json!(b)),
        2 => prop::sample::select(vec!["playing", "game_over", "x", ""]).prop_map(|s| json!(s)),
        3 => (0i64..10, 0i64..10).prop_map(|(x, y)| json!([x, y])),
        1 => Just(json!([-1, 12])),
        1 => (0i64..100).prop_map(|n| json!({"hp": n})),
        1 => Just(json!({})),
    ]
}

/// Sets that are well-typed for the template, so most patches apply.
fn valid_set(t: Template) -> BoxedStrategy<StatePatchOp> {
    let num = |lo: i64, hi: i64| (lo..hi).prop_map(|n| json!(n));
    let set = |p: &'static str, v: BoxedStrategy<Value>| v.prop_map(move |v| StatePatchOp::set(p, v)).boxed();
    let options: Vec<BoxedStrategy<StatePatchOp>> = match t {
        Template::Collider => vec![
            set("player.pos", (0i64..10, 0i64..10).prop_map(|(x, y)| json!([x, y])).boxed()),
            set("player.hp", num(0, 120).boxed()),
            set("phase", prop::sample::select(vec!["playing", "game_over"]).prop_map(|s| json!(s)).boxed()),
            set("score", num(0, 50).boxed()),
        ],
        Template::Ledger => vec![
            set("score", num(0, 250).boxed()),
            set("level", num(1, 4).boxed()),
            set("entities.gem.value", num(1, 120).boxed()),
        ],
        Template::Quest => vec![
            set("flags.boss_phase", any::<bool>().prop_map(|b| json!(b)).boxed()),
            set("flags.quest_complete", any::<bool>().prop_map(|b| json!(b)).boxed()),
            set("player.attack", num(1, 60).boxed()),
            set("entities.boss.hp", num(0, 80).boxed()),
        ],
    };
    prop::strategy::Union::new(options).boxed()
}

fn op(t: Template) -> impl Strategy<Value = StatePatchOp> {
    let set = (prop::sample::select(paths(t)), value()).prop_map(|(p, v)| StatePatchOp::set(p, v));
    let ids = vec!["rock", "coin", "gold", "warden", "gem", "boss", "bad id", ""];
    let props = prop::collection::btree_map(
        prop::sample::select(vec!["pos", "value", "hp", "color"]),
        value(),
        0..3,
    )
    .prop_map(|m| m.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<BTreeMap<String, Value>>());
    let typed_props = (0i64..10, 0i64..10, 1i64..60).prop_map(move |(x, y, n)| {
        BTreeMap::from([
            ("pos".to_string(), json!([x, y])),
            ("value".to_string(), json!(n)),
            ("hp".to_string(), json!(n)),
        ])
    });
    let spawn = (
        prop::sample::select(entity_types(t)),
        prop::sample::select(ids.clone()),
        prop_oneof![1 => props, 3 => typed_props],
        prop::option::weighted(0.2, prop::sample::select(vec!["gem", "boss", "rock", "nobody"])),
    )
        .prop_map(move |(ty, id, mut props, parent)| {
            // Keep only props the type declares most of the time, so spawns succeed often.
            let keep: &[&str] = match ty {
                "obstacle" => &["pos"],
                "coin" => &["pos", "value"],
                "item" => &["value"],
                "boss" => &["hp"],
                _ => &["pos", "value", "hp", "color"],
            };
            if props.len() == 3 {
                props.retain(|k, _| keep.contains(&k.as_str()));
            }
            StatePatchOp::Spawn {
                entity_type: ty.to_string(),
                id: id.to_string(),
                props,
                parent: parent.map(str::to_string),
            }
        });
    let remove = prop::sample::select(ids).prop_map(StatePatchOp::remove);
    prop_oneof![8 => valid_set(t), 2 => set, 3 => spawn, 1 => remove]
}

pub fn patch(t: Template) -> impl Strategy<Value = Vec<StatePatchOp>> {
    prop::collection::vec(op(t), 0..4)
}

fn step(t: Template) -> impl Strategy<Value = ActionStep> {
    let (action, param, choices): (&str, &str, Vec<&str>) = match t {
        Template::Collider => ("move", "dir", vec!["up", "down", "left", "right", "right", "diag"]),
        Template::Ledger => ("collect", "id", vec!["gem", "ruby", "coin", "gold", "ghost"]),
        Template::Quest => ("defeat", "target", vec!["boss", "boss", "warden", "ghost"]),
    };
    (
        prop::sample::select(vec![action, action, action, action, "fly"]),
        prop::option::weighted(0.9, prop::sample::select(choices)),
        prop_oneof![40 => 1u32..4, 1 => Just(0u32)],
    )
        .prop_map(move |(a, p, ticks)| {
            let mut s = ActionStep::new(a).ticks(ticks);
            if let Some(p) = p {
                s = s.param(param, p);
            }
            s
        })
}

pub fn steps(t: Template) -> impl Strategy<Value = Vec<ActionStep>> {
    prop::collection::vec(step(t), 0..6)
}

pub fn build() -> impl Strategy<Value = BuildSpec> {
    prop::sample::select(Template::ALL.to_vec()).prop_flat_map(|t| {
        prop::sample::subsequence(t.faults().to_vec(), 0..=t.faults().len())
            .prop_map(move |faults| BuildSpec::new(t, faults).unwrap())
    })
}

/// A build together with a patch and interaction for its template.
pub fn scenario() -> impl Strategy<Value = (BuildSpec, Vec<StatePatchOp>, Vec<ActionStep>, u64)> {
    build().prop_flat_map(|b| {
        let t = b.template;
        (Just(b), patch(t), steps(t), any::<u64>())
    })
}
