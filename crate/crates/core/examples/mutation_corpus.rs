//! Verify every build of the seeded-fault corpus in-process and compare the
//! outcome with the analytic ground truth.
//!
//!     cargo run --example mutation_corpus

use ggv::fixtures::corpus;
use ggv::orchestrator::{run, RunConfig};
use ggv::toy::{LocalRuntime, Template};

fn main() {
    let mut exact = 0;
    let mut builds = 0;
    for t in Template::ALL {
        let c = corpus(t);
        let suite = c.suite();
        for build in c.builds() {
            let truth = c.truth(&build);
            let report = run(&suite, &LocalRuntime::new(), None, &RunConfig::new(build.id())).unwrap();
            let failing: Vec<_> = report
                .element_labels
                .iter()
                .filter(|l| l.label == ggv::scoring::Label::Fail)
                .map(|l| l.element_id.as_str())
                .collect();
            let agrees = report
                .element_labels
                .iter()
                .zip(&truth.elements)
                .all(|(got, want)| got.element_id == want.element_id && got.label == want.label)
                && report.unit_results.iter().all(|r| truth.units[&r.unit_id] == r.verdict.kind);
            builds += 1;
            exact += usize::from(agrees);
            println!(
                "{:<36} {:>2} units  failing {:<16} {}",
                build.id(),
                report.unit_results.len(),
                if failing.is_empty() { "-".to_string() } else { failing.join(",") },
                if agrees { "ok" } else { "MISMATCH" }
            );
        }
    }
    println!("\n{exact}/{builds} builds match ground truth");
}
