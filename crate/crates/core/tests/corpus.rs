use std::collections::BTreeMap;

use ggv::fixtures::corpus;
use ggv::orchestrator::{run, RunConfig};
use ggv::spec_model::VerdictKind;
use ggv::toy::{LocalRuntime, Template};

#[test]
fn in_process_runs_match_ground_truth() {
    for t in Template::ALL {
        let c = corpus(t);
        let suite = c.suite();
        for build in c.builds() {
            let truth = c.truth(&build);
            let mut config = RunConfig::new(build.id());
            config.max_concurrency = 4;
            let report = run(&suite, &LocalRuntime::new(), None, &config).unwrap();
            assert!(report.rejected_units.is_empty(), "{:?}", report.rejected_units);
            let units: BTreeMap<String, VerdictKind> = report
                .unit_results
                .iter()
                .map(|r| (r.unit_id.clone(), r.verdict.kind))
                .collect();
            assert_eq!(units, truth.units, "{build}");
            for kp in &report.keypoint_verdicts {
                assert_eq!(kp.verdict, truth.keypoints[&kp.keypoint_id], "{build} {}", kp.keypoint_id);
            }
            let labels: Vec<_> = report.element_labels.iter().map(|l| (&l.element_id, l.label)).collect();
            let expected: Vec<_> = truth.elements.iter().map(|l| (&l.element_id, l.label)).collect();
            assert_eq!(labels, expected, "{build}");
            assert_eq!(report.build_id, build.id());
        }
    }
}

mod common;

#[test]
fn shipped_corpus_is_what_the_generator_writes() {
    let dir = common::fixtures_dir();
    let files = ggv::fixtures::corpus_files(&Template::ALL);
    for (rel, bytes) in &files {
        let shipped = std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{}: {e}", rel.display()));
        assert!(shipped == *bytes, "{} differs from generator output", rel.display());
    }
    let mut shipped = 0;
    for sub in ["", "builds", "truth"] {
        shipped += std::fs::read_dir(dir.join(sub))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().is_file())
            .count();
    }
    assert_eq!(shipped, files.len());
}

#[test]
fn shipped_collider_spec_loads() {
    use ggv::spec_model::{load_specification, Category};
    let text = std::fs::read_to_string(common::fixtures_dir().join("collider.spec.json")).unwrap();
    let spec = load_specification(&text).unwrap();
    let categories: std::collections::BTreeSet<Category> = spec.elements.iter().map(|e| e.category).collect();
    assert_eq!(spec.elements.len(), 6);
    assert_eq!(
        categories,
        [
            Category::Controls,
            Category::Physics,
            Category::FailureCondition,
            Category::Scoring,
            Category::StateTransition,
            Category::Ui
        ]
        .into()
    );
}

#[test]
fn digests_are_distinct_across_corpus() {
    let mut seen = std::collections::BTreeMap::new();
    for t in Template::ALL {
        let c = corpus(t);
        for build in c.builds() {
            for u in &c.units {
                let d = ggv::spec_model::canonical_hash(u, &build.id());
                assert_eq!(d.len(), 16);
                if let Some(prev) = seen.insert(d.clone(), (build.id(), u.id.clone())) {
                    panic!("{d} shared by {prev:?} and {} {}", build.id(), u.id);
                }
            }
        }
    }
    assert!(seen.len() >= 100);
}

#[test]
fn subprocess_runs_match_ground_truth() {
    for t in Template::ALL {
        let c = corpus(t);
        let suite = c.suite();
        for build in c.builds() {
            let truth = c.truth(&build);
            let mut config = RunConfig::new(build.id());
            config.max_concurrency = 4;
            let report = run(&suite, &common::toy_factory(""), None, &config).unwrap();
            let units: BTreeMap<String, VerdictKind> = report
                .unit_results
                .iter()
                .map(|r| (r.unit_id.clone(), r.verdict.kind))
                .collect();
            assert_eq!(units, truth.units, "{build}");
        }
    }
}
