//! Random judge expressions over a small flat state.

use std::collections::BTreeMap;

use ggv::injection::{Evidence, EvidenceStatus, Event, Snapshot};
use ggv::judge::{CmpOp, Expr, Term};
use proptest::prelude::*;
use serde_json::{json, Value};

pub const LEAVES: [&str; 5] = ["a", "b", "s", "flag", "m.x"];

pub fn leaf_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        (-3i64..4).prop_map(|n| json!(n)),
        prop::sample::select(vec!["on", "off"]).prop_map(|s| json!(s)),
        any::<bool>().prop_map(|b| json!(b)),
    ]
}

pub fn state() -> impl Strategy<Value = BTreeMap<&'static str, Value>> {
    prop::collection::btree_map(prop::sample::select(LEAVES.to_vec()), leaf_value(), 0..=LEAVES.len())
}

pub fn tree(flat: &BTreeMap<&str, Value>) -> Value {
    let mut root = json!({});
    for (path, v) in flat {
        match path.split_once('.') {
            Some((head, tail)) => {
                if root.get(head).is_none() {
                    root[head] = json!({});
                }
                root[head][tail] = v.clone();
            }
            None => root[*path] = v.clone(),
        }
    }
    root
}

pub fn evidence_of(pre: &BTreeMap<&str, Value>, post: &BTreeMap<&str, Value>, events: &[&str], status: EvidenceStatus) -> Evidence {
    Evidence {
        pre: Snapshot { tick: 0, state: tree(pre) },
        post: Snapshot { tick: 1, state: tree(post) },
        events: events.iter().map(|k| Event::new(1, k)).collect(),
        action_trace: Vec::new(),
        logs: vec!["tick 1: act rejected".into()],
        status,
        duration_ms: 0,
    }
}

pub fn term() -> impl Strategy<Value = Term> {
    let path = prop::sample::select(LEAVES.to_vec()).prop_map(String::from);
    prop_oneof![
        path.clone().prop_map(Term::Pre),
        path.clone().prop_map(Term::Post),
        path.prop_map(Term::Delta),
        leaf_value().prop_map(Term::Lit),
    ]
}

pub fn atom() -> impl Strategy<Value = Expr> {
    let kinds = prop::sample::select(vec!["hit", "coin", "boom"]).prop_map(String::from);
    prop_oneof![
        6 => (prop::sample::select(CmpOp::ALL.to_vec()), term(), term())
            .prop_map(|(op, lhs, rhs)| Expr::Cmp { op, lhs, rhs }),
        2 => prop::sample::select(LEAVES.to_vec()).prop_map(|p| Expr::Exists(p.into())),
        1 => kinds.clone().prop_map(Expr::Event),
        1 => (kinds, prop::sample::select(CmpOp::ALL.to_vec()), 0u8..3)
            .prop_map(|(kind, op, n)| Expr::EventCount { kind, op, n: f64::from(n) }),
        1 => prop::sample::select(vec!["rejected", "accepted"]).prop_map(|s| Expr::LogContains(s.into())),
    ]
}

pub fn expr(negations: bool) -> impl Strategy<Value = Expr> {
    atom().prop_recursive(3, 16, 3, move |inner| {
        let list = prop::collection::vec(inner.clone(), 1..4);
        if negations {
            prop_oneof![
                list.clone().prop_map(Expr::All),
                list.prop_map(Expr::Any),
                inner.prop_map(|e| Expr::Not(Box::new(e))),
            ]
            .boxed()
        } else {
            prop_oneof![list.clone().prop_map(Expr::All), list.prop_map(Expr::Any)].boxed()
        }
    })
}

pub fn status() -> impl Strategy<Value = EvidenceStatus> {
    prop_oneof![
        8 => Just(EvidenceStatus::Completed),
        1 => Just(EvidenceStatus::Timeout),
        1 => Just(EvidenceStatus::RuntimeCrash),
    ]
}

pub fn events() -> impl Strategy<Value = Vec<&'static str>> {
    prop::collection::vec(prop::sample::select(vec!["hit", "coin"]), 0..3)
}
