//! Vote reference labels, score a few verifier runs against them and
//! aggregate the runs.
//!
//!     cargo run --example score_labels

use std::collections::BTreeMap;

use ggv::scoring::{aggregate, confusion, majority_vote, metrics, Label, Mode};

fn labels(row: &[(&str, Label)]) -> BTreeMap<String, Label> {
    row.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn main() {
    use Label::{Fail as F, Pass as P, Unverified as U};
    let raters = [
        labels(&[("E1", P), ("E2", F), ("E3", P), ("E4", P)]),
        labels(&[("E1", P), ("E2", F), ("E3", F), ("E4", P)]),
        labels(&[("E1", P), ("E2", P), ("E3", P), ("E4", F)]),
        labels(&[("E1", P), ("E2", F), ("E3", F), ("E4", P)]),
    ];
    let vote = majority_vote(&raters).unwrap();
    println!("reference {:?}, ties {:?}", vote.labels, vote.ties);

    let runs = [
        labels(&[("E1", P), ("E2", F), ("E3", U), ("E4", P)]),
        labels(&[("E1", P), ("E2", P), ("E3", F), ("E4", P)]),
        labels(&[("E1", U), ("E2", F), ("E3", F), ("E4", F)]),
    ];
    let mut reports = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let c = confusion(run, &vote.labels).unwrap();
        let m = metrics(&c, Mode::Extended).unwrap();
        println!("run {i}: {c:?}  acc {:>6} prec {:>6} rec {:>6} f1 {:>6}", m.acc, m.prec, m.rec, m.f1);
        if let Err(e) = metrics(&c, Mode::Binary) {
            println!("        binary: {e}");
        }
        reports.push(m);
    }
    let agg = aggregate(&reports, Mode::Extended).unwrap();
    println!(
        "@{}: acc macro {} micro {}, f1 macro {} micro {}",
        agg.k, agg.acc.macro_mean, agg.acc.micro, agg.f1.macro_mean, agg.f1.micro
    );
}
