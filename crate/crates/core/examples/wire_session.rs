//! The runtime side of the stdio protocol, driven with a scripted request
//! stream. Set GGV_RUNTIME_CMD (for example
//! `ggv toy-runtime --seed {seed}`) to also run the same interaction through
//! a real subprocess.
//!
//!     cargo run --example wire_session

use ggv::injection::{ActionStep, CommandRuntime, RuntimeCommand, RuntimeFactory, StatePatchOp};
use ggv::toy::{serve, ServeOptions};

const REQUESTS: &str = r#"{"op":"launch","game":"ledger","seed":3}
{"op":"patch","ops":[{"op":"spawn","entity_type":"item","id":"coin","props":{"value":5}}]}
{"op":"act","steps":[{"action":"collect","params":{"id":"coin"}}]}
{"op":"act","steps":[{"action":"collect","params":{"id":"coin"},"ticks":0}]}
{"op":"snapshot"}
{"op":"shutdown"}
"#;

fn main() {
    let mut out = Vec::new();
    let exit = serve(REQUESTS.as_bytes(), &mut out, &ServeOptions::default()).unwrap();
    for (req, resp) in REQUESTS.lines().zip(String::from_utf8(out).unwrap().lines()) {
        println!("> {req}");
        let shown: String = resp.chars().take(160).collect();
        println!("< {shown}{}", if resp.len() > 160 { " ..." } else { "" });
    }
    println!("server exit: {exit:?}");

    let Ok(template) = std::env::var("GGV_RUNTIME_CMD") else {
        return;
    };
    let factory = CommandRuntime::new(RuntimeCommand::parse(&template).expect("runtime command"));
    let mut session = factory.launch("ledger", 3, None).expect("launch");
    println!("\nsubprocess build {}", session.build_id());
    session
        .apply_patch(&[StatePatchOp::spawn("item", "coin", [("value", serde_json::json!(5))])])
        .unwrap();
    let outcome = session.execute(&[ActionStep::new("collect").param("id", "coin")]).unwrap();
    println!("logs {:?}", outcome.logs);
    println!("score {}", session.snapshot().unwrap().get("score").unwrap());
    session.shutdown();
}
