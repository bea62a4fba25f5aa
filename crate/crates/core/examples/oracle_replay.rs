//! Cross-check the engine against the independent oracle and show that a
//! seeded run replays to identical evidence.
//!
//!     cargo run --example oracle_replay

use ggv::fixtures::corpus;
use ggv::injection::{ActionStep, StatePatchOp};
use ggv::orchestrator::{run, RunConfig};
use ggv::toy::{oracle_simulate, BuildSpec, Engine, Fault, LocalRuntime, Template};

fn main() {
    let build = BuildSpec::new(Template::Quest, [Fault::GateIgnored]).unwrap();
    // The boss should be untouchable before its phase begins.
    let patch = [StatePatchOp::set("flags.boss_phase", false)];
    let steps = [
        ActionStep::new("defeat").param("target", "boss").ticks(3),
        ActionStep::new("defeat").param("target", "ghost"),
    ];

    let mut engine = Engine::launch(build.clone(), 9);
    assert!(engine.apply_patch(&patch).is_ok());
    let outcome = engine.act(&steps);
    let oracle = oracle_simulate(&build, &patch, &steps).unwrap();
    println!("[{build}] engine and oracle agree: {}", engine.snapshot() == oracle.snapshot && outcome.events == oracle.events);
    println!("  accepted {:?}, boss hp {}", oracle.accepted, oracle.snapshot.get("entities.boss.hp").unwrap());

    let suite = corpus(Template::Quest).suite();
    let mut config = RunConfig::new(build.id());
    config.run_seed = 42;
    let a = run(&suite, &LocalRuntime::new(), None, &config).unwrap();
    let b = run(&suite, &LocalRuntime::new(), None, &config).unwrap();
    for (x, y) in a.unit_results.iter().zip(&b.unit_results) {
        let same = x.evidence.as_ref().unwrap().replay_bytes() == y.evidence.as_ref().unwrap().replay_bytes();
        println!("  {:<20} {:<24} replay identical: {same}", x.unit_id, x.verdict.to_string());
    }
}
