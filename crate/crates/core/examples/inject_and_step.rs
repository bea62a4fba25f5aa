//! Drive the collider engine directly: inject a state, step it, and watch
//! a bad patch roll back.
//!
//!     cargo run --example inject_and_step

use ggv::injection::{ActionStep, StatePatchOp};
use ggv::toy::{BuildSpec, Engine, Fault, Template};

fn main() {
    for build in [
        BuildSpec::correct(Template::Collider),
        BuildSpec::new(Template::Collider, [Fault::NoGameOver]).unwrap(),
    ] {
        let mut engine = Engine::launch(build.clone(), 1);
        // One hit from death, with a rock right next to the player.
        let report = engine.apply_patch(&[
            StatePatchOp::set("player.hp", 25),
            StatePatchOp::spawn("obstacle", "rock", [("pos", serde_json::json!([1, 0]))]),
        ]);
        assert!(report.is_ok());

        let outcome = engine.act(&[ActionStep::new("move").param("dir", "right")]);
        let post = engine.snapshot();
        println!("[{build}] tick {}", post.tick);
        for line in &outcome.logs {
            println!("  {line}");
        }
        for e in &outcome.events {
            println!("  event {} at {}", e.kind, e.tick);
        }
        println!("  hp={} phase={}", post.get("player.hp").unwrap(), post.get("phase").unwrap());
    }

    // The second op fails, so the first is rolled back too.
    let mut engine = Engine::launch(BuildSpec::correct(Template::Collider), 1);
    let before = engine.snapshot();
    let report = engine.apply_patch(&[
        StatePatchOp::set("player.hp", 5),
        StatePatchOp::set("player.hp", "lots"),
    ]);
    let (index, failed) = report.failure().unwrap();
    println!(
        "\npatch op {index} failed with {}; state unchanged: {}",
        failed.code.as_deref().unwrap_or("?"),
        report.realized == before
    );
}
