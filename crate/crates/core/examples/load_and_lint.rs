//! Load a shipped suite, lint it against the runtime schema, then break a
//! unit and look at the diagnostics.
//!
//!     cargo run --example load_and_lint

use std::path::Path;

use ggv::injection::StatePatchOp;
use ggv::spec_model::{validate_suite, Budget, Suite};
use ggv::toy::{template_schema, Template};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut suite = Suite::load(
        &dir.join("collider.spec.json"),
        &dir.join("collider.keypoints.json"),
        &dir.join("collider.units.json"),
    )
    .expect("fixtures load");
    println!(
        "{}: {} elements, {} keypoints, {} units",
        suite.spec.game_id,
        suite.spec.elements.len(),
        suite.keypoints.len(),
        suite.units.len()
    );

    let schema = template_schema(Template::Collider);
    let clean = validate_suite(&suite, Some(&schema), &Budget::default());
    println!("clean suite: {} diagnostics", clean.len());
    for d in &clean {
        println!("  {d}");
    }

    // A typo in a patch path, an action the runtime never advertised and an
    // assertion over a path that does not exist.
    let u = &mut suite.units[0];
    u.patch.push(StatePatchOp::set("player.hpp", 10));
    u.interaction[0].action = "teleport".into();
    u.expectation = "eq(post.player.mana, 3)".into();
    println!("\nafter breaking {}:", u.id);
    for d in validate_suite(&suite, Some(&schema), &Budget::default()) {
        println!("  {d}");
    }
}
