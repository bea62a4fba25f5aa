//! Parse a few assertions and evaluate them against hand-made evidence.
//!
//!     cargo run --example judge_assertions

use ggv::injection::{Event, Evidence, EvidenceStatus, Snapshot};
use ggv::judge::{evaluate, parse_assertion};
use serde_json::json;

fn main() {
    let evidence = Evidence {
        pre: Snapshot {
            tick: 0,
            state: json!({"player": {"hp": 100, "pos": [0, 0]}, "phase": "playing"}),
        },
        post: Snapshot {
            tick: 1,
            state: json!({"player": {"hp": 75, "pos": [0, 0]}, "phase": "playing"}),
        },
        events: vec![Event::new(1, "collision").with("with", json!("rock"))],
        action_trace: Vec::new(),
        logs: vec!["tick 1: move rejected (blocked)".into()],
        status: EvidenceStatus::Completed,
        duration_ms: 3,
    };

    for text in [
        r#"all(event("collision"), eq(delta(player.hp), -25))"#,
        "gt(post.player.hp, pre.player.hp)",
        r#"any(eq(post.phase, "game_over"), not(exists(post.player.mana)))"#,
        r#"all(event_count("collision") eq 1, log_contains("rejected"))"#,
        "lt(post.player.hp, \"low\")",
        "eq(post.player.hp",
    ] {
        println!("{text}");
        match parse_assertion(text) {
            Err(e) => println!("  parse error: {e}"),
            Ok(expr) => {
                let out = evaluate(&expr, &evidence);
                println!("  holds: {}", out.holds);
                for t in &out.trace {
                    println!("    {} = {}{}", t.expr, t.value, t.note.as_ref().map(|n| format!("  ({n})")).unwrap_or_default());
                }
            }
        }
    }
}
