//! Run with a checkpoint, tear its last record as a crash would, and resume.
//!
//!     cargo run --example checkpoint_resume

use ggv::fixtures::corpus;
use ggv::orchestrator::{resume, run, RunConfig};
use ggv::toy::{LocalRuntime, Template};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ndjson");
    let suite = corpus(Template::Ledger).suite();
    let mut config = RunConfig::new("ledger+double_add");
    config.checkpoint_path = Some(path.clone());

    let first = run(&suite, &LocalRuntime::new(), None, &config).unwrap();
    println!("first run: {:?}", first.counts);

    // Keep three whole records and half of the fourth.
    let bytes = std::fs::read(&path).unwrap();
    let ends: Vec<usize> = bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').map(|(i, _)| i + 1).collect();
    let cut = ends[2] + (ends[3] - ends[2]) / 2;
    std::fs::write(&path, &bytes[..cut]).unwrap();
    println!("checkpoint cut from {} to {cut} bytes", bytes.len());

    let resumed = resume(&suite, &LocalRuntime::new(), None, &config).unwrap();
    println!("resume: {:?}", resumed.counts);
    println!("same verdicts: {}", resumed.verdict_view() == first.verdict_view());

    // Editing a unit invalidates only its record.
    let mut edited = suite.clone();
    edited.units[0].expectation = "eq(post.score, 0)".into();
    let again = resume(&edited, &LocalRuntime::new(), None, &config).unwrap();
    println!("after edit: {:?}", again.counts);
}
